#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "solarda/loss.hpp"
#include "solarda/tensor.hpp"
#include "solarda/timeseries.hpp"

namespace solarda::data {

enum class Domain { source, target };
enum class SplitTag { train, val, test };

std::string to_string(Domain d);

struct Sample {
  std::vector<double> features;
  std::optional<int> label;
  double power_kw = 0.0;
};

/// Sample table with row-major features [n x width].
/// labels[i] == nn::kUnlabeled marks a sample without annotation.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<double> power_kw;
  std::vector<double> power_frac;  // power_kw / site capacity
  std::vector<Minutes> timestamps;
  Domain domain = Domain::source;
  bool annotation_applied = false;  // set by annotate_fraction

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t width() const noexcept { return feature_names.size(); }
  std::size_t n_labeled() const noexcept;
  std::size_t n_unlabeled() const noexcept { return size() - n_labeled(); }

  std::span<const double> row(std::size_t i) const { return {features.data() + i * width(), width()}; }
  Sample sample(std::size_t i) const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset select_columns(std::span<const std::size_t> columns) const;
  /// [indices.size() x width] batch tensor.
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor all_features() const;
};

/// Builds a dataset from a joined weather+power series. Rows with any missing
/// value are dropped; the count is returned through `dropped`.
Dataset make_dataset(const TimeSeries& joined, const std::vector<std::string>& feature_columns,
                     double capacity_kw, Domain domain, std::size_t* dropped = nullptr);

// --- binning ---------------------------------------------------------------

enum class BinScheme { zero_plus_quantile, equal_width };

std::string to_string(BinScheme s);
BinScheme parse_bin_scheme(const std::string& s);

inline constexpr double kZeroPowerThreshold = 1e-6;

/// C-1 strictly increasing edges. class(v) = number of edges strictly below v.
struct BinEdges {
  BinScheme scheme = BinScheme::zero_plus_quantile;
  std::vector<double> edges;

  std::size_t classes() const noexcept { return edges.size() + 1; }
  int classify(double value) const;
  std::vector<int> classify(std::span<const double> values) const;
  friend bool operator==(const BinEdges&, const BinEdges&) = default;
};

struct Binning {
  std::vector<int> labels;
  BinEdges edges;
};

/// zero_plus_quantile: class 0 holds values <= 1e-6, the positive values are
/// split at their j/(C-1) quantiles. equal_width: C equal bins over [min, max].
Binning bin_labels(std::span<const double> power, std::size_t classes, BinScheme scheme = BinScheme::zero_plus_quantile);

/// Linear-interpolation quantile of unsorted data, q in [0, 1].
double quantile(std::vector<double> values, double q);

// --- normalisation ---------------------------------------------------------

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;      // population std, clamped features use 1
  std::vector<bool> clamped;    // true where the raw std was below 1e-12

  static Normalizer fit(const Dataset& train);
  Dataset apply(const Dataset& ds) const;
  Dataset invert(const Dataset& ds) const;
  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

// --- splitting and annotation ---------------------------------------------

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
  std::vector<SplitTag> tags;  // per original sample
};

/// val = floor(n f_val), test = floor(n f_test), the remainder goes to train.
SplitIndices split_indices(std::size_t n, SplitFractions fractions, std::uint64_t seed, bool chronological = false);

struct Splits {
  Dataset train, val, test;
  SplitIndices indices;
};

Splits split(const Dataset& ds, SplitFractions fractions, std::uint64_t seed, bool chronological = false);

enum class AnnotationStrategy { uniform, stratified };

/// Keeps exactly round(n p / 100) labels (chosen by seed) and removes the rest.
Dataset annotate_fraction(const Dataset& ds, double p, std::uint64_t seed,
                          AnnotationStrategy strategy = AnnotationStrategy::uniform);

}  // namespace solarda::data
