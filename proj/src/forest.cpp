#include "solarda/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "solarda/errors.hpp"
#include "solarda/parallel.hpp"
#include "solarda/random.hpp"

namespace solarda::forest {

namespace {

int argmax_lowest(const std::vector<std::size_t>& hist) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < hist.size(); ++c) {
    if (hist[c] > hist[best]) best = c;
  }
  return int(best);
}

double gini(const std::vector<std::size_t>& hist, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t c : hist) {
    const double p = double(c) / double(n);
    s += p * p;
  }
  return 1.0 - s;
}

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double weighted_child_impurity = 0.0;  // n_l g_l + n_r g_r
};

class TreeBuilder {
 public:
  TreeBuilder(const data::Dataset& ds, const ForestHyper& hyper, std::size_t n_classes, std::uint64_t seed)
      : ds_(ds), hyper_(hyper), classes_(n_classes), rng_(seed) {
    const std::size_t f = ds.width();
    per_split_ = hyper.features_per_split == 0 ? std::size_t(std::ceil(std::sqrt(double(f))))
                                               : std::min(hyper.features_per_split, f);
    per_split_ = std::max<std::size_t>(per_split_, 1);
  }

  DecisionTree build(std::vector<std::size_t> rows) {
    tree_ = DecisionTree{};
    tree_.importance.assign(ds_.width(), 0.0);
    rows_ = std::move(rows);
    struct Task {
      std::size_t node, begin, end, depth;
    };
    tree_.nodes.emplace_back();
    std::vector<Task> stack{{0, 0, rows_.size(), 0}};
    while (!stack.empty()) {
      const Task t = stack.back();
      stack.pop_back();
      auto& node = tree_.nodes[t.node];
      node.histogram.assign(classes_, 0);
      for (std::size_t i = t.begin; i < t.end; ++i) ++node.histogram[std::size_t(ds_.labels[rows_[i]])];
      node.count = t.end - t.begin;
      node.majority = argmax_lowest(node.histogram);
      const double node_gini = gini(node.histogram, node.count);
      if (t.depth >= hyper_.max_depth || node_gini <= 0.0 || node.count < 2 * hyper_.min_leaf) continue;

      const SplitChoice best = find_split(t.begin, t.end);
      if (!best.found) continue;
      tree_.importance[std::size_t(best.feature)] +=
          double(node.count) * node_gini - best.weighted_child_impurity;

      const auto mid_it = std::stable_partition(
          rows_.begin() + std::ptrdiff_t(t.begin), rows_.begin() + std::ptrdiff_t(t.end),
          [&](std::size_t r) { return ds_.row(r)[std::size_t(best.feature)] <= best.threshold; });
      const auto mid = std::size_t(mid_it - rows_.begin());
      const int left = int(tree_.nodes.size());
      tree_.nodes.emplace_back();
      tree_.nodes.emplace_back();
      auto& parent = tree_.nodes[t.node];  // re-fetch after growth
      parent.feature = best.feature;
      parent.threshold = best.threshold;
      parent.left = left;
      parent.right = left + 1;
      stack.push_back({std::size_t(left + 1), mid, t.end, t.depth + 1});
      stack.push_back({std::size_t(left), t.begin, mid, t.depth + 1});
    }
    return std::move(tree_);
  }

 private:
  SplitChoice find_split(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> order(ds_.width());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    SplitChoice best;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k >= per_split_ && best.found) break;
      evaluate_feature(order[k], begin, end, best);
    }
    return best;
  }

  void evaluate_feature(std::size_t f, std::size_t begin, std::size_t end, SplitChoice& best) {
    const std::size_t n = end - begin;
    scratch_.clear();
    for (std::size_t i = begin; i < end; ++i) scratch_.emplace_back(ds_.row(rows_[i])[f], ds_.labels[rows_[i]]);
    std::sort(scratch_.begin(), scratch_.end());
    std::vector<std::size_t> left(classes_, 0), right(classes_, 0);
    for (const auto& [v, l] : scratch_) ++right[std::size_t(l)];
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto cls = std::size_t(scratch_[i].second);
      ++left[cls];
      --right[cls];
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < hyper_.min_leaf || nr < hyper_.min_leaf) continue;
      const double lo = scratch_[i].first;
      const double hi = scratch_[i + 1].first;
      if (!(lo < hi)) continue;
      const double impurity = double(nl) * gini(left, nl) + double(nr) * gini(right, nr);
      if (!best.found || impurity < best.weighted_child_impurity) {
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold < hi)) threshold = lo;
        best = {true, int(f), threshold, impurity};
      }
    }
  }

  const data::Dataset& ds_;
  ForestHyper hyper_;
  std::size_t classes_;
  std::size_t per_split_ = 1;
  std::mt19937_64 rng_;
  DecisionTree tree_;
  std::vector<std::size_t> rows_;
  std::vector<std::pair<double, int>> scratch_;
};

std::size_t count_classes(const data::Dataset& ds) {
  int max_label = -1;
  for (int l : ds.labels) {
    if (l == nn::kUnlabeled) throw DataError("random forest training needs every row labelled");
    max_label = std::max(max_label, l);
  }
  return std::size_t(max_label + 1);
}

}  // namespace

std::size_t DecisionTree::leaf_for(std::span<const double> x) const {
  std::size_t i = 0;
  while (!is_leaf(i)) {
    const auto& n = nodes[i];
    i = std::size_t(x[std::size_t(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!is_leaf(i)) {
      d[std::size_t(nodes[i].left)] = d[i] + 1;
      d[std::size_t(nodes[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

DecisionTree fit_tree(const data::Dataset& train, std::span<const std::size_t> rows, const ForestHyper& hyper,
                      std::size_t n_classes, std::uint64_t seed) {
  TreeBuilder builder(train, hyper, n_classes, seed);
  return builder.build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

Forest fit_forest(const data::Dataset& train, const ForestHyper& hyper, std::uint64_t seed) {
  if (train.size() == 0) throw DataError("cannot fit a forest on an empty dataset");
  if (hyper.n_trees == 0 || hyper.min_leaf == 0) throw ConfigError("n_trees and min_leaf must be positive");
  const std::size_t classes = count_classes(train);
  std::vector<bool> present(classes, false);
  for (int l : train.labels) present[std::size_t(l)] = true;
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw DataError("random forest needs at least two classes in the training data");
  }

  Forest forest;
  forest.hyper = hyper;
  forest.n_features = train.width();
  forest.n_classes = classes;
  forest.trees.resize(hyper.n_trees);
  forest.bootstrap.resize(hyper.n_trees);
  forest.oob.resize(hyper.n_trees);
  const std::size_t n = train.size();
  parallel_for(hyper.n_trees, default_jobs(), [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(seed, {t}));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> rows(n);
    std::vector<bool> drawn(n, false);
    for (auto& r : rows) {
      r = pick(rng);
      drawn[r] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!drawn[i]) forest.oob[t].push_back(i);
    }
    forest.trees[t] = fit_tree(train, rows, hyper, classes, rng());
    forest.bootstrap[t] = std::move(rows);
  });
  return forest;
}

int predict_forest(const Forest& forest, std::span<const double> features) {
  if (features.size() != forest.n_features) {
    throw ShapeError("forest expects " + std::to_string(forest.n_features) + " features, got " +
                     std::to_string(features.size()));
  }
  std::vector<std::size_t> votes(forest.n_classes, 0);
  for (const auto& tree : forest.trees) ++votes[std::size_t(tree.predict(features))];
  return argmax_lowest(votes);
}

std::vector<int> predict_forest(const Forest& forest, const data::Dataset& ds) {
  std::vector<int> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = predict_forest(forest, ds.row(i));
  return out;
}

std::vector<double> gini_importance(const Forest& forest) {
  std::vector<double> total(forest.n_features, 0.0);
  std::size_t contributing = 0;
  for (const auto& tree : forest.trees) {
    const double sum = std::accumulate(tree.importance.begin(), tree.importance.end(), 0.0);
    if (sum <= 0.0) continue;
    ++contributing;
    for (std::size_t f = 0; f < total.size(); ++f) total[f] += tree.importance[f] / sum;
  }
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  if (contributing == 0 || sum <= 0.0) {
    std::fill(total.begin(), total.end(), forest.n_features ? 1.0 / double(forest.n_features) : 0.0);
    return total;
  }
  for (double& v : total) v /= sum;
  return total;
}

std::vector<std::size_t> select_features(std::span<const double> importances, std::size_t k) {
  if (k == 0 || k > importances.size()) {
    throw ConfigError("select_features: k must lie in [1, " + std::to_string(importances.size()) + "]");
  }
  std::vector<std::size_t> order(importances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importances[a] > importances[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return double(hits) / double(truth.size());
}

}  // namespace solarda::forest
