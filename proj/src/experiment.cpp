#include "solarda/experiment.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>

#include "solarda/errors.hpp"
#include "solarda/parallel.hpp"
#include "solarda/random.hpp"

namespace solarda::experiment {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_bundled(const std::string& spec) {
  const auto& names = data::bundled_profile_names();
  return std::find(names.begin(), names.end(), spec) != names.end();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

}  // namespace

std::string site_label(const std::string& spec) {
  if (is_bundled(spec)) return spec;
  const std::filesystem::path p(spec);
  return p.has_stem() ? p.stem().string() : p.parent_path().filename().string();
}

pipeline::Site resolve_site(const std::string& spec, std::size_t n, std::uint64_t data_seed) {
  if (is_bundled(spec)) {
    const auto synthetic = data::gen_synthetic(data::bundled_profile(spec), n, derive_seed(data_seed, {fnv1a(spec)}));
    return pipeline::prepare_site(synthetic);
  }
  const std::filesystem::path p(spec);
  if (std::filesystem::is_directory(p)) return pipeline::load_site_dir(p);
  if (std::filesystem::is_regular_file(p)) return pipeline::load_prepared(p);
  (void)data::bundled_profile(spec);  // throws with the list of bundled names
  throw DataError("unknown site '" + spec + "'");
}

std::uint64_t cell_seed(std::uint64_t seed, const std::string& target, double p) {
  return derive_seed(seed, {fnv1a(target), std::bit_cast<std::uint64_t>(p)});
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Progress& progress) {
  if (cfg.sources.empty() || cfg.targets.empty()) throw ConfigError("experiment needs sources and targets");
  if (cfg.seeds.empty() || cfg.ps.empty()) throw ConfigError("experiment needs seeds and p values");
  cfg.adapt.validate();
  for (double p : cfg.ps) {
    if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("p values must lie in [0, 100]");
  }
  std::mutex log_mutex;
  auto log = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(msg);
  };

  std::vector<std::string> names;
  for (const auto& s : cfg.sources) names.push_back(s);
  for (const auto& t : cfg.targets) {
    if (std::find(names.begin(), names.end(), t) == names.end()) names.push_back(t);
  }
  std::map<std::string, pipeline::Site> sites;
  for (const auto& n : names) {
    log("site " + n);
    sites.emplace(n, resolve_site(n, cfg.n, cfg.data_seed));
  }
  const std::size_t jobs = cfg.jobs ? cfg.jobs : default_jobs();

  struct SourceSlot {
    std::string source;
    std::uint64_t seed = 0;
    std::optional<ModelArtifact> artifact;
    report::SourceScore score;
    std::string error;
  };
  std::vector<SourceSlot> slots;
  for (const auto& s : cfg.sources) {
    for (auto seed : cfg.seeds) slots.push_back({s, seed, std::nullopt, {}, {}});
  }
  parallel_for(slots.size(), jobs, [&](std::size_t i) {
    auto& slot = slots[i];
    try {
      auto run = pipeline::run_source(sites.at(slot.source), cfg.source, slot.seed, nullptr, cfg.rf_baseline);
      run.artifact.provenance["source_site"] = site_label(slot.source);
      slot.score = {site_label(slot.source), slot.seed, run.rf_test_accuracy, run.test.accuracy};
      slot.artifact = std::move(run.artifact);
      log("source " + slot.source + " seed " + std::to_string(slot.seed) + ": test accuracy " +
          report::percent(run.test.accuracy) + " (best epoch " + std::to_string(run.training.best_epoch) + ")");
    } catch (const std::exception& e) {
      slot.error = e.what();
      log("source " + slot.source + " seed " + std::to_string(slot.seed) + " failed: " + e.what());
    }
  });

  struct Cell {
    const SourceSlot* slot;
    std::string target;
    double p;
    std::optional<report::ResultRow> row;
    std::string error;
  };
  std::vector<Cell> cells;
  for (const auto& slot : slots) {
    for (const auto& t : cfg.targets) {
      if (t == slot.source) continue;
      for (double p : cfg.ps) cells.push_back({&slot, t, p, std::nullopt, {}});
    }
  }
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    auto& cell = cells[i];
    const auto& slot = *cell.slot;
    if (!slot.artifact) {
      cell.error = "source training failed: " + slot.error;
      return;
    }
    try {
      const auto splits = pipeline::prepare_target(sites.at(cell.target), *slot.artifact, cell.p, slot.seed, cfg.target);
      auto acfg = cfg.adapt;
      acfg.p = cell.p;
      acfg.seed = cell_seed(slot.seed, site_label(cell.target), cell.p);
      const auto result = adapt::adapt_target(slot.artifact->model, splits, acfg);
      const auto& r = result.report;
      cell.row = report::ResultRow{site_label(slot.source), site_label(cell.target), cell.p, slot.seed,
                                   r.teacher.accuracy, r.no_adapt.accuracy, r.teacher.accuracy - r.no_adapt.accuracy};
      log(slot.source + " -> " + cell.target + " p=" + report::p_label(cell.p) + " seed " + std::to_string(slot.seed) +
          ": " + report::percent(r.no_adapt.accuracy) + " -> " + report::percent(r.teacher.accuracy));
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });

  ExperimentResult out;
  for (const auto& slot : slots) {
    if (slot.artifact) out.sources.push_back(slot.score);
  }
  for (const auto& c : cells) {
    if (c.row) {
      out.cells.push_back(*c.row);
    } else {
      out.failed.push_back({site_label(c.slot->source), site_label(c.target), c.p, c.slot->seed, c.error});
    }
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto num = [&](const std::string& s) -> std::uint64_t {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(trim(s), &pos);
      if (pos == trim(s).size()) return v;
    } catch (const std::logic_error&) {
    }
    throw ConfigError("bad seed list '" + text + "' (use 1..5 or 1,2,3)");
  };
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto a = num(text.substr(0, dots));
    const auto b = num(text.substr(dots + 2));
    if (b < a || b - a > 100000) throw ConfigError("bad seed range '" + text + "'");
    for (auto s = a; s <= b; ++s) out.push_back(s);
    return out;
  }
  for (const auto& part : parse_names(text)) out.push_back(num(part));
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : parse_names(text)) {
    try {
      out.push_back(data::parse_double(part));
    } catch (const DataError&) {
      throw ConfigError("bad number '" + part + "' in '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

void write_failed(const std::vector<FailedCell>& failed, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "source,target,p,seed,reason\n";
  for (const auto& f : failed) {
    std::string reason = f.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    std::replace(reason.begin(), reason.end(), '\n', ' ');
    out << f.source << ',' << f.target << ',' << data::format_double(f.p) << ',' << f.seed << ',' << reason << "\n";
  }
}

}  // namespace solarda::experiment
