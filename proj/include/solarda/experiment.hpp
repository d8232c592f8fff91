#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "solarda/pipeline.hpp"
#include "solarda/report.hpp"

namespace solarda::experiment {

struct ExperimentConfig {
  std::vector<std::string> sources;  // bundled profile names, site directories or prepared CSVs
  std::vector<std::string> targets;
  std::vector<double> ps{0, 10, 20, 50, 100};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t n = data::kSamplesPerYear;  // rows per synthetic site
  std::uint64_t data_seed = 2006;
  pipeline::SourceOptions source;
  pipeline::TargetOptions target;
  adapt::AdaptConfig adapt;  // seed and p are set per cell
  bool rf_baseline = true;
  std::size_t jobs = 0;  // 0 = all hardware threads
};

struct FailedCell {
  std::string source;
  std::string target;
  double p = 0.0;
  std::uint64_t seed = 0;
  std::string reason;
};

struct ExperimentResult {
  std::vector<report::SourceScore> sources;
  std::vector<report::ResultRow> cells;  // grid order: source, target, seed, p
  std::vector<FailedCell> failed;
};

/// Bundled profile name -> synthetic site (seeded by data_seed and the name);
/// directory -> load_site_dir; file -> load_prepared.
pipeline::Site resolve_site(const std::string& spec, std::size_t n, std::uint64_t data_seed);
/// Display name of a site spec (profile name or file stem).
std::string site_label(const std::string& spec);

std::uint64_t cell_seed(std::uint64_t seed, const std::string& target, double p);

using Progress = std::function<void(const std::string&)>;

/// Every (source, target != source, p, seed) cell; cells that throw are
/// recorded in `failed` with the reason.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Progress& progress = {});

/// "1..5" or "1,2,7".
std::vector<std::uint64_t> parse_seeds(const std::string& text);
/// Comma-separated numbers.
std::vector<double> parse_numbers(const std::string& text);
std::vector<std::string> parse_names(const std::string& text);

void write_failed(const std::vector<FailedCell>& failed, const std::filesystem::path& path);

}  // namespace solarda::experiment
