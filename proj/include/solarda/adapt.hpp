#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "solarda/dataset.hpp"
#include "solarda/loss.hpp"
#include "solarda/network.hpp"
#include "solarda/optim.hpp"
#include "solarda/train.hpp"

namespace solarda::adapt {

struct AdaptConfig {
  double alpha = 0.99;
  double lambda = 1.0;
  double p = 20.0;  // annotation percent, recorded for reporting
  std::size_t epochs = 50;
  std::size_t batch_size = 1000;
  std::optional<double> labeled_fraction_per_batch;  // unset = natural mixing
  double temperature = 1.0;
  double lr = 1e-4;
  optim::RunningStats teacher_bn = optim::RunningStats::copy;
  bool early_stop = false;  // on labelled val accuracy; ignored when p < 10
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Target-side inputs of an adaptation run. Only target-domain datasets are
/// accepted, and the train split must carry an annotation mask.
class TargetSplits {
 public:
  TargetSplits(data::Dataset train, data::Dataset val, data::Dataset test);
  const data::Dataset& train() const noexcept { return train_; }
  const data::Dataset& val() const noexcept { return val_; }
  const data::Dataset& test() const noexcept { return test_; }

 private:
  data::Dataset train_, val_, test_;
};

struct Batch {
  std::vector<std::size_t> indices;  // rows of the target train split
  std::size_t n_labeled = 0;
};

std::size_t steps_per_epoch(std::size_t n, const AdaptConfig& cfg);

/// Rows for (epoch, step). Natural mixing slices a per-epoch permutation of
/// the union; fixed-ratio draws round(ratio * batch) labelled rows (at least
/// one when any exist) and fills the rest from the unlabelled pool.
Batch compose_batch(std::span<const std::size_t> labeled_pool, std::span<const std::size_t> unlabeled_pool,
                    const AdaptConfig& cfg, std::size_t epoch, std::size_t step);

struct EpochLoss {
  std::size_t epoch = 0;
  double l_cons = 0.0;
  double l_ce = 0.0;
  double l_total = 0.0;
  double val_accuracy = 0.0;  // teacher, labelled val rows; 0 when not tracked
};

struct AdaptReport {
  std::vector<nn::LossReport> steps;
  std::vector<EpochLoss> epochs;
  train::EvalReport teacher;   // target test
  train::EvalReport student;   // diagnostics only
  train::EvalReport no_adapt;  // the source model on the same test split
  double delta = 0.0;          // teacher.accuracy - no_adapt.accuracy
  std::size_t source_samples_read = 0;
  std::size_t target_samples_read = 0;
};

struct StepInfo {
  std::size_t epoch = 0;
  std::size_t step = 0;
  const nn::LossReport& loss;
  const nn::Network& student;         // after the optimiser step
  const nn::Network& teacher_before;  // before the EMA update
  const nn::Network& teacher;         // after the EMA update
};
using StepObserver = std::function<void(const StepInfo&)>;

struct AdaptResult {
  nn::Network teacher;
  nn::Network student;
  AdaptReport report;
};

/// Teacher and student start from theta_s. Each step feeds the batch to both,
/// takes soft teacher targets (eval mode, detached), updates the student with
/// Adam on l_cons + lambda * l_ce, then moves the teacher by EMA. Returns the
/// teacher.
AdaptResult adapt_target(const nn::Network& theta_s, const TargetSplits& target, const AdaptConfig& cfg,
                         const StepObserver& observer = {});

}  // namespace solarda::adapt
