#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "solarda/dataset.hpp"
#include "solarda/network.hpp"

namespace solarda::train {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 1000;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;  // epochs without a new best val accuracy
  std::uint64_t seed = 0;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // frozen eval-mode snapshot at the epoch boundary
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  nn::Network model;  // weights of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  std::vector<double> precision;                    // 0 for a class never predicted
  std::vector<double> recall;                       // 0 for a class never present
  std::size_t n = 0;
};

/// Seeds used by a training run, derived from TrainConfig::seed.
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t epoch);

/// Batches of one epoch. A trailing batch of a single row is merged into the
/// previous one when the network has BatchNorm.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    bool merge_singleton);

/// Minimises hard cross-entropy with Adam. `val` may be empty, in which case
/// the train accuracy drives model selection.
TrainResult train_source(const data::Dataset& train, const data::Dataset& val, const nn::Architecture& arch,
                         const TrainConfig& cfg);

/// Eval-mode logits in chunks.
Tensor predict_logits(const nn::Network& model, const data::Dataset& ds);
std::vector<int> predict(const nn::Network& model, const data::Dataset& ds);

/// Mean hard cross-entropy over the labelled rows, eval mode.
double mean_loss(const nn::Network& model, const data::Dataset& ds);

/// (mean hard cross-entropy, accuracy) for a fully labelled dataset, eval mode.
std::pair<double, double> loss_and_accuracy(const nn::Network& model, const data::Dataset& ds);

/// Requires every row labelled.
EvalReport evaluate(const nn::Network& model, const data::Dataset& split);
EvalReport make_report(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t classes);

}  // namespace solarda::train
