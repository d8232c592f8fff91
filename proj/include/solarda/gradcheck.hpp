#pragma once

#include <string>
#include <vector>

#include "solarda/loss.hpp"
#include "solarda/network.hpp"

namespace solarda::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;  // empty when the net has no parameters
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Analytic gradients of mean hard cross-entropy over all rows (train mode).
std::vector<Tensor> analytic_gradients(const Network& net, const Tensor& batch, const Labels& labels);

/// Compares `analytic` with central differences of the same loss.
/// rel = |a - n| / max(|a|, |n|, 1e-12); a network without parameters yields 0.
GradCheckResult compare_with_finite_differences(const Network& net, const Tensor& batch, const Labels& labels,
                                                const std::vector<Tensor>& analytic, double eps);

/// Works on a copy; `net` is not modified.
GradCheckResult grad_check(const Network& net, const Tensor& batch, const Labels& labels, double eps = 1e-5);

}  // namespace solarda::nn
