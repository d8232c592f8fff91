#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "solarda/dataset.hpp"
#include "solarda/network.hpp"

namespace solarda {

inline constexpr int kArtifactVersion = 1;

/// Everything the target side needs: weights, BN statistics, the source
/// normaliser and bin edges, the selected feature columns and provenance.
struct ModelArtifact {
  nn::Network model;
  data::Normalizer normalizer;
  data::BinEdges bins;
  std::vector<std::size_t> feature_indices;  // into data::weather_columns()
  std::vector<std::string> feature_names;
  std::map<std::string, std::string> provenance;  // seed, config_sha256, source_profile, ...

  std::string serialize() const;
  static ModelArtifact parse(const std::string& text, const std::string& source_name = "<memory>");
  void save(const std::filesystem::path& path) const;
  static ModelArtifact load(const std::filesystem::path& path);
};

}  // namespace solarda
