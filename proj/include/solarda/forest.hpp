#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "solarda/dataset.hpp"

namespace solarda::forest {

/// Array-encoded CART classification tree. Leaves have feature == -1.
struct DecisionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;  // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    std::vector<std::size_t> histogram;  // class counts of the training rows reaching the node
    std::size_t count = 0;
    int majority = 0;  // histogram argmax, lowest id on ties
  };
  std::vector<Node> nodes;
  std::vector<double> importance;  // unnormalised impurity decrease per feature

  bool is_leaf(std::size_t i) const noexcept { return nodes[i].feature < 0; }
  std::size_t leaf_for(std::span<const double> x) const;
  int predict(std::span<const double> x) const { return nodes[leaf_for(x)].majority; }
  std::size_t depth() const;
};

struct ForestHyper {
  std::size_t n_trees = 100;
  std::size_t max_depth = 12;
  std::size_t min_leaf = 5;
  std::size_t features_per_split = 0;  // 0 = ceil(sqrt(F))
};

struct Forest {
  std::vector<DecisionTree> trees;
  std::vector<std::vector<std::size_t>> bootstrap;  // row indices drawn for each tree
  std::vector<std::vector<std::size_t>> oob;        // rows never drawn for each tree
  ForestHyper hyper;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
};

/// Bootstrap trees with Gini splits. Tree t draws from its own stream
/// derive_seed(seed, t), so the result does not depend on fitting order.
Forest fit_forest(const data::Dataset& train, const ForestHyper& hyper, std::uint64_t seed);

/// Majority vote; ties go to the lowest class id.
int predict_forest(const Forest& forest, std::span<const double> features);
std::vector<int> predict_forest(const Forest& forest, const data::Dataset& ds);

/// Mean over trees of each tree's normalised impurity decrease; sums to 1.
std::vector<double> gini_importance(const Forest& forest);

/// Top-k features by importance (ties to the lower index), returned in ascending index order.
std::vector<std::size_t> select_features(std::span<const double> importances, std::size_t k);

/// One CART tree on the given rows (repeats allowed), as used inside the forest.
DecisionTree fit_tree(const data::Dataset& train, std::span<const std::size_t> rows, const ForestHyper& hyper,
                      std::size_t n_classes, std::uint64_t seed);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

}  // namespace solarda::forest
