#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "solarda/adapt.hpp"
#include "solarda/artifact.hpp"
#include "solarda/dataset.hpp"
#include "solarda/forest.hpp"
#include "solarda/synthetic.hpp"
#include "solarda/train.hpp"

namespace solarda::pipeline {

/// A site's 30-minute weather joined with its power averaged to the same grid.
struct Site {
  std::string name;
  double capacity_kw = 0.0;
  data::TimeSeries joined;
};

Site prepare_site(const data::TimeSeries& weather, const data::TimeSeries& power, double capacity_kw,
                  const std::string& name);
Site prepare_site(const data::SyntheticSite& synthetic);
/// Reads weather.csv, power.csv and site.txt from a directory.
Site load_site_dir(const std::filesystem::path& dir);

/// Prepared CSV: joined columns plus "# capacity_kw=" and "# site=" metadata.
void write_prepared(const Site& site, const std::filesystem::path& path);
Site load_prepared(const std::filesystem::path& path);

/// All weather columns, rows with missing values dropped.
data::Dataset site_dataset(const Site& site, data::Domain domain, std::size_t* dropped = nullptr);

struct SourceOptions {
  std::size_t classes = 5;
  data::BinScheme scheme = data::BinScheme::zero_plus_quantile;
  std::size_t k_features = 6;
  forest::ForestHyper forest;
  data::SplitFractions fractions;
  bool chronological = false;
  train::TrainConfig train;  // train.seed is overwritten from the run seed
  nn::ArchitectureOptions arch;
};

/// Seeds of one source or target run, derived from the run seed.
std::uint64_t split_seed(std::uint64_t seed);
std::uint64_t forest_seed(std::uint64_t seed);
std::uint64_t train_seed(std::uint64_t seed);
std::uint64_t annotate_seed(std::uint64_t seed, std::uint64_t which);

/// Source splits with labels from the train-split bin edges, all weather features.
struct LabeledSource {
  data::Splits splits;
  data::BinEdges bins;
  std::size_t dropped = 0;
};
LabeledSource label_source(const Site& site, const SourceOptions& opts, std::uint64_t seed);

struct FeatureSelection {
  std::vector<double> importances;  // per weather column
  std::vector<std::size_t> selected;
  std::vector<std::string> names;
};
/// Forest importances on the source train split.
FeatureSelection select_source_features(const data::Dataset& train, const SourceOptions& opts, std::uint64_t seed);

struct SourceRun {
  ModelArtifact artifact;
  train::TrainResult training;
  train::EvalReport test;     // deep network, source test split
  double rf_test_accuracy = 0.0;  // forest on the selected features, same split
  FeatureSelection features;
  std::size_t dropped = 0;
};

/// Split, bin, select features, normalise and train on one source site.
/// `features` skips forest selection when given.
SourceRun run_source(const Site& site, const SourceOptions& opts, std::uint64_t seed,
                     const FeatureSelection* features = nullptr, bool with_rf_baseline = true);

struct TargetOptions {
  data::SplitFractions fractions;
  bool chronological = false;
  data::AnnotationStrategy strategy = data::AnnotationStrategy::uniform;
};

/// Labels target rows with the artifact's bin edges, selects its columns,
/// applies its normaliser, splits and masks train and val down to p percent.
adapt::TargetSplits prepare_target(const Site& site, const ModelArtifact& artifact, double p, std::uint64_t seed,
                                   const TargetOptions& opts = {}, std::size_t* dropped = nullptr);

/// Target rows with the artifact's labels, columns and normaliser (no split).
data::Dataset target_dataset(const Site& site, const ModelArtifact& artifact, std::size_t* dropped = nullptr);

}  // namespace solarda::pipeline
