#include "solarda/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <utility>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace solarda::data {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

const std::vector<std::string>& weather_columns() {
  static const std::vector<std::string> cols = {"dni",         "dhi",      "ghi",
                                                "dew_point",   "temperature",
                                                "pressure",    "relative_humidity",
                                                "wind_direction", "wind_speed",
                                                "surface_albedo"};
  return cols;
}

Minutes parse_timestamp(std::string_view text) {
  text = trim(text);
  // YYYY-MM-DD[T ]HH:MM[:SS]
  auto fail = [&]() -> Minutes { throw DataError("unparseable timestamp '" + std::string(text) + "'"); };
  if (text.size() < 16 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':') {
    return fail();
  }
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), mo) || !parse_int(text.substr(8, 2), d) ||
      !parse_int(text.substr(11, 2), h) || !parse_int(text.substr(14, 2), mi)) {
    return fail();
  }
  if (text.size() > 16) {
    if (text.size() != 19 || text[16] != ':' || !parse_int(text.substr(17, 2), sec)) return fail();
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) return fail();
  if (sec != 0) throw DataError("timestamp '" + std::string(text) + "' has non-zero seconds");
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return Minutes(days) * 1440 + Minutes(h) * 60 + Minutes(mi);
}

std::string format_timestamp(Minutes t) {
  const Minutes days = (t >= 0 ? t : t - 1439) / 1440;
  const Minutes rem = t - days * 1440;
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:00", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()), int(rem / 60), int(rem % 60));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("unparseable number '" + std::string(text) + "'");
  }
  return v;
}

bool TimeSeries::has_column(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

const std::vector<double>& TimeSeries::column(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw CsvError(CsvError::Kind::missing_column, "no column named '" + std::string(name) + "'");
  return columns[std::size_t(it - names.begin())];
}

std::vector<double>& TimeSeries::column(std::string_view name) {
  return const_cast<std::vector<double>&>(std::as_const(*this).column(name));
}

void TimeSeries::add_column(std::string name, std::vector<double> values) {
  if (values.size() != timestamps.size()) throw DataError("column '" + name + "' length differs from timestamps");
  names.push_back(std::move(name));
  columns.push_back(std::move(values));
}

TimeSeries load_csv(const std::filesystem::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw CsvError(CsvError::Kind::io, "cannot open " + path.string());
  return read_csv(in, required, path.string());
}

TimeSeries read_csv(std::istream& in, const std::vector<std::string>& required, const std::string& source_name) {
  TimeSeries ts;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string_view body = trim(t.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        ts.metadata[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
      }
      continue;
    }
    for (auto f : split_fields(t)) header.emplace_back(f);
    break;
  }
  if (header.empty()) throw CsvError(CsvError::Kind::empty_file, source_name + ": empty file (no header)");

  const auto find_col = [&](const std::string& name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const std::ptrdiff_t ts_col = find_col("timestamp");
  if (ts_col < 0) throw CsvError(CsvError::Kind::missing_column, source_name + ": missing column 'timestamp'");
  std::vector<std::ptrdiff_t> idx;
  for (const auto& name : required) {
    const std::ptrdiff_t c = find_col(name);
    if (c < 0) throw CsvError(CsvError::Kind::missing_column, source_name + ": missing column '" + name + "'");
    idx.push_back(c);
  }

  struct Row {
    Minutes t;
    std::size_t line;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = split_fields(t);
    if (std::size_t(ts_col) >= fields.size()) {
      throw CsvError(CsvError::Kind::bad_timestamp, source_name + ":" + std::to_string(lineno) + ": missing timestamp");
    }
    Row row{0, lineno, {}};
    try {
      row.t = parse_timestamp(fields[std::size_t(ts_col)]);
    } catch (const DataError& e) {
      throw CsvError(CsvError::Kind::bad_timestamp, source_name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    std::string problem;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      double v = kNaN;
      if (std::size_t(idx[k]) < fields.size() && !fields[std::size_t(idx[k])].empty()) {
        try {
          v = parse_double(fields[std::size_t(idx[k])]);
          if (!std::isfinite(v)) v = kNaN;
        } catch (const DataError&) {
        }
      }
      if (std::isnan(v) && problem.empty()) problem = "missing or unparseable value in column '" + required[k] + "'";
      row.values.push_back(v);
    }
    if (!problem.empty()) ts.rejected.push_back({lineno, problem});
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw CsvError(CsvError::Kind::empty_file, source_name + ": no data rows");

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].t == rows[i - 1].t) {
      throw CsvError(CsvError::Kind::duplicate_timestamp,
                     source_name + ":" + std::to_string(rows[i].line) + ": duplicate timestamp " +
                         format_timestamp(rows[i].t));
    }
  }
  if (rows.size() > 1) {
    ts.interval = rows[1].t - rows[0].t;
    for (std::size_t i = 2; i < rows.size(); ++i) {
      if (rows[i].t - rows[i - 1].t != ts.interval) {
        throw CsvError(CsvError::Kind::non_uniform_spacing,
                       source_name + ":" + std::to_string(rows[i].line) + ": spacing " +
                           std::to_string(rows[i].t - rows[i - 1].t) + " min differs from " +
                           std::to_string(ts.interval) + " min");
      }
    }
  }
  std::sort(ts.rejected.begin(), ts.rejected.end(), [](const auto& a, const auto& b) { return a.line < b.line; });

  ts.names = required;
  ts.columns.assign(required.size(), std::vector<double>(rows.size()));
  ts.timestamps.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ts.timestamps.push_back(rows[i].t);
    for (std::size_t k = 0; k < required.size(); ++k) ts.columns[k][i] = rows[i].values[k];
  }
  return ts;
}

void write_csv(const TimeSeries& series, std::ostream& out) {
  for (const auto& [k, v] : series.metadata) out << "# " << k << "=" << v << "\n";
  out << "timestamp";
  for (const auto& n : series.names) out << "," << n;
  out << "\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << format_timestamp(series.timestamps[i]);
    for (const auto& col : series.columns) out << "," << (std::isnan(col[i]) ? std::string() : format_double(col[i]));
    out << "\n";
  }
}

void write_csv(const TimeSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError(CsvError::Kind::io, "cannot write " + path.string());
  write_csv(series, out);
  if (!out) throw CsvError(CsvError::Kind::io, "write failed for " + path.string());
}

TimeSeries resample_mean(const TimeSeries& series, Minutes target_interval) {
  if (series.size() == 0) throw DataError("resample_mean: empty series");
  const Minutes src = series.interval;
  if (target_interval <= 0 || (src > 0 && target_interval % src != 0) || (src == 0 && series.size() > 1)) {
    throw DataError("resample_mean: target interval " + std::to_string(target_interval) +
                    " min is not an integer multiple of " + std::to_string(src) + " min");
  }
  const std::size_t k = src == 0 ? 1 : std::size_t(target_interval / src);
  const std::size_t n_out = series.size() / k;
  TimeSeries out;
  out.interval = target_interval;
  out.names = series.names;
  out.metadata = series.metadata;
  out.timestamps.reserve(n_out);
  for (std::size_t w = 0; w < n_out; ++w) out.timestamps.push_back(series.timestamps[w * k]);
  out.columns.assign(series.columns.size(), std::vector<double>(n_out));
  for (std::size_t c = 0; c < series.columns.size(); ++c) {
    const auto& col = series.columns[c];
    for (std::size_t w = 0; w < n_out; ++w) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += col[w * k + j];
      out.columns[c][w] = sum / double(k);  // NaN propagates
    }
  }
  return out;
}

TimeSeries join(const TimeSeries& a, const TimeSeries& b) {
  TimeSeries out;
  out.interval = a.interval;
  out.names = a.names;
  out.names.insert(out.names.end(), b.names.begin(), b.names.end());
  out.columns.assign(out.names.size(), {});
  out.metadata = a.metadata;
  for (const auto& [k, v] : b.metadata) out.metadata.emplace(k, v);
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a.timestamps[i] < b.timestamps[j]) {
      ++i;
    } else if (b.timestamps[j] < a.timestamps[i]) {
      ++j;
    } else {
      out.timestamps.push_back(a.timestamps[i]);
      for (std::size_t c = 0; c < a.columns.size(); ++c) out.columns[c].push_back(a.columns[c][i]);
      for (std::size_t c = 0; c < b.columns.size(); ++c) out.columns[a.columns.size() + c].push_back(b.columns[c][j]);
      ++i;
      ++j;
    }
  }
  return out;
}

}  // namespace solarda::data
