#include "solarda/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "solarda/errors.hpp"
#include "solarda/timeseries.hpp"

namespace solarda::report {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::uint64_t parse_seed(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    if (s.empty() || s[0] < '0' || s[0] > '9') throw std::invalid_argument(s);
    const auto v = std::stoull(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw DataError(where + ": bad seed '" + s + "'");
}

double parse_num(const std::string& s, const std::string& where) {
  try {
    return data::parse_double(s);
  } catch (const DataError&) {
    throw DataError(where + ": bad number '" + s + "'");
  }
}

// Reads rows of a CSV with an exact header.
template <class F>
void read_table(std::istream& in, const std::string& name, const std::string& header, std::size_t width, F&& on_row) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != header) {
    throw DataError(name + ": expected header '" + header + "'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (cells.size() != width) throw DataError(where + ": expected " + std::to_string(width) + " fields");
    on_row(cells, where);
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }
std::string lpad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

std::string render_text(const std::vector<std::vector<std::string>>& table) {
  std::vector<std::size_t> widths;
  for (const auto& row : table) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (const auto& row : table) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      line += c == 0 ? pad(row[c], widths[c]) : lpad(row[c], widths[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

std::vector<double> all_ps(const std::vector<GridRow>& grid) {
  std::vector<double> ps;
  for (const auto& g : grid) ps.insert(ps.end(), g.ps.begin(), g.ps.end());
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  return ps;
}

// Cell text for p in row g, "" when missing.
template <class F>
std::string cell(const GridRow& g, double p, F&& value) {
  for (std::size_t i = 0; i < g.ps.size(); ++i) {
    if (g.ps[i] == p) return value(i);
  }
  return "";
}

}  // namespace

std::string percent(double fraction) {
  const double v = fraction * 100.0;
  // Round the accumulated binary noise away before printing two decimals.
  return fmt("%.2f", std::round(v * 1e6) / 1e6);
}

std::string p_label(double p) { return data::format_double(p); }

void write_results(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << kResultsHeader << "\n";
  for (const auto& r : rows) {
    out << r.source << ',' << r.target << ',' << data::format_double(r.p) << ',' << r.seed << ','
        << data::format_double(r.accuracy) << ',' << data::format_double(r.acc_no_adapt) << ','
        << data::format_double(r.delta) << "\n";
  }
}

void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_results(rows, out);
}

std::vector<ResultRow> read_results(std::istream& in, const std::string& name) {
  std::vector<ResultRow> rows;
  read_table(in, name, kResultsHeader, 7, [&](const std::vector<std::string>& c, const std::string& where) {
    ResultRow r{c[0], c[1], parse_num(c[2], where), parse_seed(c[3], where), parse_num(c[4], where),
                parse_num(c[5], where), parse_num(c[6], where)};
    if (std::abs(r.delta - (r.accuracy - r.acc_no_adapt)) > 1e-9) {
      throw DataError(where + ": stored delta does not equal accuracy - acc_no_adapt");
    }
    rows.push_back(std::move(r));
  });
  return rows;
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open results file " + path.string() + " (run experiment first)");
  return read_results(in, path.string());
}

void write_source_scores(const std::vector<SourceScore>& rows, std::ostream& out) {
  out << kSourceHeader << "\n";
  for (const auto& r : rows) {
    out << r.source << ',' << r.seed << ',' << data::format_double(r.rf_accuracy) << ','
        << data::format_double(r.dnn_accuracy) << "\n";
  }
}

void write_source_scores(const std::vector<SourceScore>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_source_scores(rows, out);
}

std::vector<SourceScore> read_source_scores(std::istream& in, const std::string& name) {
  std::vector<SourceScore> rows;
  read_table(in, name, kSourceHeader, 4, [&](const std::vector<std::string>& c, const std::string& where) {
    rows.push_back({c[0], parse_seed(c[1], where), parse_num(c[2], where), parse_num(c[3], where)});
  });
  return rows;
}

std::vector<SourceScore> read_source_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_source_scores(in, path.string());
}

std::vector<GridRow> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::map<double, std::vector<double>>> acc;
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, double>> baseline;
  for (const auto& r : rows) {
    const auto key = std::pair{r.source, r.target};
    if (!acc.count(key)) order.push_back(key);
    acc[key][r.p].push_back(r.accuracy);
    baseline[key].emplace(r.seed, r.acc_no_adapt);  // first row of each seed
  }
  std::vector<GridRow> grid;
  for (const auto& key : order) {
    GridRow g;
    g.source = key.first;
    g.target = key.second;
    double sum = 0.0;
    for (const auto& [seed, v] : baseline[key]) sum += v;
    g.no_adapt = sum / double(baseline[key].size());
    for (const auto& [p, values] : acc[key]) {
      const double n = double(values.size());
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= n;
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      g.ps.push_back(p);
      g.mean.push_back(mean);
      g.stdev.push_back(values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
      g.n_seeds.push_back(values.size());
    }
    grid.push_back(std::move(g));
  }
  return grid;
}

std::string table2_csv(const std::vector<GridRow>& grid) {
  const auto ps = all_ps(grid);
  std::string out = "source,target,no_adapt";
  for (double p : ps) out += ",p" + p_label(p);
  out += "\n";
  for (const auto& g : grid) {
    out += g.source + "," + g.target + "," + percent(g.no_adapt);
    for (double p : ps) out += "," + cell(g, p, [&](std::size_t i) { return percent(g.mean[i]); });
    out += "\n";
  }
  return out;
}

std::string table2_text(const std::vector<GridRow>& grid) {
  const auto ps = all_ps(grid);
  std::vector<std::vector<std::string>> t;
  std::vector<std::string> head{"Source -> Target", "w/o adapt."};
  for (double p : ps) head.push_back("p=" + p_label(p) + "%");
  t.push_back(head);
  for (const auto& g : grid) {
    std::vector<std::string> row{g.source + " -> " + g.target, percent(g.no_adapt)};
    for (double p : ps) row.push_back(cell(g, p, [&](std::size_t i) { return percent(g.mean[i]); }));
    t.push_back(row);
  }
  return render_text(t);
}

std::string deltas_csv(const std::vector<GridRow>& grid) {
  const auto ps = all_ps(grid);
  std::string out = "source,target";
  for (double p : ps) out += ",delta_p" + p_label(p);
  out += "\n";
  for (const auto& g : grid) {
    out += g.source + "," + g.target;
    for (double p : ps) out += "," + cell(g, p, [&](std::size_t i) { return percent(g.mean[i] - g.no_adapt); });
    out += "\n";
  }
  return out;
}

std::string deltas_text(const std::vector<GridRow>& grid) {
  const auto ps = all_ps(grid);
  std::vector<std::vector<std::string>> t;
  std::vector<std::string> head{"Source -> Target"};
  for (double p : ps) head.push_back("gain p=" + p_label(p) + "%");
  t.push_back(head);
  for (const auto& g : grid) {
    std::vector<std::string> row{g.source + " -> " + g.target};
    for (double p : ps) row.push_back(cell(g, p, [&](std::size_t i) { return percent(g.mean[i] - g.no_adapt); }));
    t.push_back(row);
  }
  return render_text(t);
}

std::string curves_csv(const std::vector<GridRow>& grid) {
  std::string out = "source,target,p,mean,std,n_seeds\n";
  for (const auto& g : grid) {
    for (std::size_t i = 0; i < g.ps.size(); ++i) {
      out += g.source + "," + g.target + "," + p_label(g.ps[i]) + "," + fmt("%.4f", g.mean[i] * 100.0) + "," +
             fmt("%.4f", g.stdev[i] * 100.0) + "," + std::to_string(g.n_seeds[i]) + "\n";
    }
  }
  return out;
}

namespace {

struct Table1Row {
  std::string source;
  double rf = 0.0, dnn = 0.0;
};

std::vector<Table1Row> table1_rows(const std::vector<SourceScore>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SourceScore*>> by;
  for (const auto& r : rows) {
    if (!by.count(r.source)) order.push_back(r.source);
    by[r.source].push_back(&r);
  }
  std::vector<Table1Row> out;
  for (const auto& s : order) {
    Table1Row t;
    t.source = s;
    for (const auto* r : by[s]) {
      t.rf += r->rf_accuracy;
      t.dnn += r->dnn_accuracy;
    }
    t.rf /= double(by[s].size());
    t.dnn /= double(by[s].size());
    out.push_back(t);
  }
  return out;
}

}  // namespace

std::string table1_csv(const std::vector<SourceScore>& rows) {
  const auto t = table1_rows(rows);
  std::string out = "method";
  for (const auto& r : t) out += "," + r.source;
  out += "\nrandom_forest";
  for (const auto& r : t) out += "," + percent(r.rf);
  out += "\ndeep_network";
  for (const auto& r : t) out += "," + percent(r.dnn);
  return out + "\n";
}

std::string table1_text(const std::vector<SourceScore>& rows) {
  const auto t = table1_rows(rows);
  std::vector<std::vector<std::string>> table(3);
  table[0].push_back("Method");
  table[1].push_back("Random Forest");
  table[2].push_back("Deep Neural Network");
  for (const auto& r : t) {
    table[0].push_back(r.source);
    table[1].push_back(percent(r.rf));
    table[2].push_back(percent(r.dnn));
  }
  return render_text(table);
}

}  // namespace solarda::report
