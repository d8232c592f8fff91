#include "solarda/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "solarda/errors.hpp"

namespace solarda::nn {

namespace {

double batch_loss(Network& net, const Tensor& batch, const Labels& labels, const Mask& mask) {
  return cross_entropy_hard(net.forward(batch), labels, mask);
}

}  // namespace

std::vector<Tensor> analytic_gradients(const Network& net, const Tensor& batch, const Labels& labels) {
  Network work = net;
  work.set_mode(Mode::train);
  const Mask mask(labels.size(), true);
  const Tensor logits = work.forward(batch);
  return work.backward(cross_entropy_hard_grad(logits, labels, mask)).params;
}

GradCheckResult compare_with_finite_differences(const Network& net, const Tensor& batch, const Labels& labels,
                                                const std::vector<Tensor>& analytic, double eps) {
  Network work = net;
  work.set_mode(Mode::train);
  const Mask mask(labels.size(), true);
  auto& params = work.parameters();
  if (analytic.size() != params.size()) throw ShapeError("analytic gradient count does not match parameters");

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (analytic[p].shape() != params[p].shape()) {
      throw ShapeError("analytic gradient shape mismatch for " + work.parameter_names()[p]);
    }
    for (std::size_t j = 0; j < params[p].size(); ++j) {
      const double saved = params[p][j];
      params[p][j] = saved + eps;
      const double up = batch_loss(work, batch, labels, mask);
      params[p][j] = saved - eps;
      const double down = batch_loss(work, batch, labels, mask);
      params[p][j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_parameter.empty()) {
        result.max_rel_error = rel;
        result.worst_parameter = work.parameter_names()[p];
        result.worst_index = j;
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const Network& net, const Tensor& batch, const Labels& labels, double eps) {
  return compare_with_finite_differences(net, batch, labels, analytic_gradients(net, batch, labels), eps);
}

}  // namespace solarda::nn
