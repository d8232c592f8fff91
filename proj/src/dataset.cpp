#include "solarda/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "solarda/errors.hpp"
#include "solarda/random.hpp"

namespace solarda::data {

std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

std::size_t Dataset::n_labeled() const noexcept {
  return std::size_t(std::count_if(labels.begin(), labels.end(), [](int l) { return l != nn::kUnlabeled; }));
}

Sample Dataset::sample(std::size_t i) const {
  Sample s;
  const auto r = row(i);
  s.features.assign(r.begin(), r.end());
  if (labels[i] != nn::kUnlabeled) s.label = labels[i];
  s.power_kw = power_kw[i];
  return s;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.feature_names = feature_names;
  out.domain = domain;
  out.annotation_applied = annotation_applied;
  const std::size_t w = width();
  out.features.reserve(indices.size() * w);
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("subset index " + std::to_string(i) + " >= " + std::to_string(size()));
    const auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
    out.power_kw.push_back(power_kw[i]);
    out.power_frac.push_back(power_frac[i]);
    out.timestamps.push_back(timestamps[i]);
  }
  return out;
}

Dataset Dataset::select_columns(std::span<const std::size_t> columns) const {
  Dataset out = *this;
  out.feature_names.clear();
  for (std::size_t c : columns) {
    if (c >= width()) throw ShapeError("feature index " + std::to_string(c) + " out of range");
    out.feature_names.push_back(feature_names[c]);
  }
  out.features.assign(size() * columns.size(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t k = 0; k < columns.size(); ++k) out.features[i * columns.size() + k] = features[i * width() + columns[k]];
  }
  return out;
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  Tensor t({indices.size(), width()});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), t.row(r).begin());
  }
  return t;
}

Tensor Dataset::all_features() const { return Tensor({size(), width()}, features); }

Dataset make_dataset(const TimeSeries& joined, const std::vector<std::string>& feature_columns, double capacity_kw,
                     Domain domain, std::size_t* dropped) {
  if (!(capacity_kw > 0.0)) throw DataError("site capacity must be positive");
  std::vector<const std::vector<double>*> cols;
  for (const auto& name : feature_columns) cols.push_back(&joined.column(name));
  const auto& power = joined.column(kPowerColumn);
  Dataset ds;
  ds.feature_names = feature_columns;
  ds.domain = domain;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < joined.size(); ++i) {
    bool ok = std::isfinite(power[i]);
    for (const auto* c : cols) ok = ok && std::isfinite((*c)[i]);
    if (!ok) {
      ++skipped;
      continue;
    }
    for (const auto* c : cols) ds.features.push_back((*c)[i]);
    ds.labels.push_back(nn::kUnlabeled);
    ds.power_kw.push_back(power[i]);
    ds.power_frac.push_back(power[i] / capacity_kw);
    ds.timestamps.push_back(joined.timestamps[i]);
  }
  if (dropped) *dropped = skipped;
  return ds;
}

// --- binning ---------------------------------------------------------------

std::string to_string(BinScheme s) { return s == BinScheme::zero_plus_quantile ? "zero-plus-quantile" : "equal-width"; }

BinScheme parse_bin_scheme(const std::string& s) {
  if (s == "zero-plus-quantile") return BinScheme::zero_plus_quantile;
  if (s == "equal-width") return BinScheme::equal_width;
  throw ConfigError("unknown bin scheme '" + s + "' (expected zero-plus-quantile or equal-width)");
}

int BinEdges::classify(double value) const {
  if (!std::isfinite(value)) throw DataError("cannot bin a non-finite power value");
  return int(std::lower_bound(edges.begin(), edges.end(), value) - edges.begin());
}

std::vector<int> BinEdges::classify(std::span<const double> values) const {
  std::vector<int> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(classify(v));
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (double(values.size()) - 1.0) * q;
  const auto lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - double(lo)) * (values[hi] - values[lo]);
}

Binning bin_labels(std::span<const double> power, std::size_t classes, BinScheme scheme) {
  if (classes < 2) throw ConfigError("need at least 2 classes");
  if (power.empty()) throw DataError("cannot bin an empty power sequence");
  for (double v : power) {
    if (!std::isfinite(v) || v < 0.0) throw DataError("power values must be finite and non-negative");
  }
  BinEdges edges{scheme, {}};
  if (scheme == BinScheme::equal_width) {
    const auto [lo, hi] = std::minmax_element(power.begin(), power.end());
    if (!(*hi > *lo)) throw DataError("equal-width binning needs a non-degenerate power range");
    for (std::size_t j = 1; j < classes; ++j) edges.edges.push_back(*lo + (*hi - *lo) * double(j) / double(classes));
  } else {
    std::vector<double> positive;
    for (double v : power) {
      if (v > kZeroPowerThreshold) positive.push_back(v);
    }
    edges.edges.push_back(kZeroPowerThreshold);
    if (positive.empty()) {
      // Night-only input: every label is 0 and the positive edges are placeholders.
      for (std::size_t j = 2; j < classes; ++j) edges.edges.push_back(kZeroPowerThreshold * double(j));
    } else if (classes > 2) {
      const std::set<double> distinct(positive.begin(), positive.end());
      if (distinct.size() < classes - 1) {
        throw DataError("only " + std::to_string(distinct.size()) + " distinct positive power values for " +
                        std::to_string(classes - 1) + " positive bins; use the equal-width scheme");
      }
      for (std::size_t j = 1; j + 1 < classes; ++j) {
        edges.edges.push_back(quantile(positive, double(j) / double(classes - 1)));
      }
    }
    if (!std::is_sorted(edges.edges.begin(), edges.edges.end()) ||
        std::adjacent_find(edges.edges.begin(), edges.edges.end()) != edges.edges.end()) {
      throw DataError("quantile bin edges are not strictly increasing; use the equal-width scheme");
    }
  }
  return {edges.classify(power), edges};
}

// --- normalisation ---------------------------------------------------------

Normalizer Normalizer::fit(const Dataset& train) {
  if (train.size() == 0) throw DataError("cannot fit a normalizer on an empty split");
  const std::size_t w = train.width();
  Normalizer n;
  n.mean.assign(w, 0.0);
  n.std.assign(w, 0.0);
  n.clamped.assign(w, false);
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t c = 0; c < w; ++c) n.mean[c] += train.features[i * w + c];
  }
  for (double& m : n.mean) m /= double(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t c = 0; c < w; ++c) {
      const double d = train.features[i * w + c] - n.mean[c];
      n.std[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < w; ++c) {
    n.std[c] = std::sqrt(n.std[c] / double(train.size()));
    if (n.std[c] < 1e-12) {
      n.std[c] = 1.0;
      n.clamped[c] = true;
    }
  }
  return n;
}

Dataset Normalizer::apply(const Dataset& ds) const {
  if (ds.width() != mean.size()) throw ShapeError("normalizer width does not match dataset width");
  Dataset out = ds;
  const std::size_t w = ds.width();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 0; c < w; ++c) out.features[i * w + c] = (ds.features[i * w + c] - mean[c]) / std[c];
  }
  return out;
}

Dataset Normalizer::invert(const Dataset& ds) const {
  if (ds.width() != mean.size()) throw ShapeError("normalizer width does not match dataset width");
  Dataset out = ds;
  const std::size_t w = ds.width();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 0; c < w; ++c) out.features[i * w + c] = ds.features[i * w + c] * std[c] + mean[c];
  }
  return out;
}

// --- splitting and annotation ---------------------------------------------

SplitIndices split_indices(std::size_t n, SplitFractions f, std::uint64_t seed, bool chronological) {
  if (n < 3) throw DataError("need at least 3 samples to split, got " + std::to_string(n));
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const auto n_val = std::size_t(std::floor(double(n) * f.val + 1e-9));
  const auto n_test = std::size_t(std::floor(double(n) * f.test + 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (!chronological) {
    std::mt19937_64 rng(derive_seed(seed, {0x5911u}));
    std::shuffle(order.begin(), order.end(), rng);
  }
  SplitIndices s;
  const std::size_t n_train = n - n_val - n_test;
  s.train.assign(order.begin(), order.begin() + std::ptrdiff_t(n_train));
  s.val.assign(order.begin() + std::ptrdiff_t(n_train), order.begin() + std::ptrdiff_t(n_train + n_val));
  s.test.assign(order.begin() + std::ptrdiff_t(n_train + n_val), order.end());
  s.tags.assign(n, SplitTag::train);
  for (std::size_t i : s.val) s.tags[i] = SplitTag::val;
  for (std::size_t i : s.test) s.tags[i] = SplitTag::test;
  return s;
}

Splits split(const Dataset& ds, SplitFractions fractions, std::uint64_t seed, bool chronological) {
  Splits s;
  s.indices = split_indices(ds.size(), fractions, seed, chronological);
  s.train = ds.subset(s.indices.train);
  s.val = ds.subset(s.indices.val);
  s.test = ds.subset(s.indices.test);
  return s;
}

Dataset annotate_fraction(const Dataset& ds, double p, std::uint64_t seed, AnnotationStrategy strategy) {
  if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("annotation percentage p must lie in [0, 100]");
  const std::size_t n = ds.size();
  const auto keep = std::size_t(std::llround(double(n) * p / 100.0));
  std::mt19937_64 rng(derive_seed(seed, {0xa770u}));
  std::vector<std::size_t> chosen;

  if (strategy == AnnotationStrategy::uniform) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    chosen.assign(order.begin(), order.begin() + std::ptrdiff_t(keep));
  } else {
    int max_label = -1;
    for (int l : ds.labels) {
      if (l == nn::kUnlabeled) throw DataError("stratified annotation needs every sample labelled");
      max_label = std::max(max_label, l);
    }
    const std::size_t classes = std::size_t(max_label + 1);
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < n; ++i) by_class[std::size_t(ds.labels[i])].push_back(i);
    // largest-remainder allocation so the quota sums to `keep` exactly
    std::vector<std::size_t> quota(classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double exact = n == 0 ? 0.0 : double(by_class[c].size()) * double(keep) / double(n);
      quota[c] = std::size_t(std::floor(exact));
      assigned += quota[c];
      remainders.emplace_back(exact - double(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < keep && k < remainders.size(); ++k, ++assigned) ++quota[remainders[k].second];
    for (std::size_t c = 0; c < classes; ++c) {
      std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
      chosen.insert(chosen.end(), by_class[c].begin(), by_class[c].begin() + std::ptrdiff_t(quota[c]));
    }
  }

  Dataset out = ds;
  std::vector<bool> keep_mask(n, false);
  for (std::size_t i : chosen) keep_mask[i] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep_mask[i]) out.labels[i] = nn::kUnlabeled;
  }
  out.annotation_applied = true;
  return out;
}

}  // namespace solarda::data
