#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "solarda/network.hpp"
#include "solarda/tensor.hpp"

namespace solarda::optim {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates mirroring the parameter shapes.
struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(const std::vector<Tensor>& params, AdamHyper h);
};

/// One bias-corrected Adam update, in place. `names` (optional, same length as
/// params) is used to name a parameter whose gradient is non-finite.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               std::span<const std::string> names = {});

inline void adam_step(nn::Network& net, std::span<const Tensor> grads, AdamState& state) {
  adam_step(net.parameters(), grads, state, net.parameter_names());
}

/// Teacher decay for theta_tea <- alpha theta_tea + (1 - alpha) theta_stu.
/// What the teacher does with its BatchNorm running statistics.
enum class RunningStats { copy, ema, keep };

struct EmaConfig {
  double alpha = 0.99;
  RunningStats running_stats = RunningStats::copy;
  void validate() const;
};

/// Elementwise EMA of the learned parameters. BN running statistics are
/// copied from the student, averaged like the parameters, or left alone.
void ema_update(nn::Network& teacher, const nn::Network& student, const EmaConfig& cfg);

/// Tensor-level form of the same rule.
void ema_update(std::span<Tensor> teacher, std::span<const Tensor> student, const EmaConfig& cfg);

}  // namespace solarda::optim
