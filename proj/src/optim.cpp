#include "solarda/optim.hpp"

#include <algorithm>
#include <cmath>

#include "solarda/errors.hpp"

namespace solarda::optim {

AdamState::AdamState(const std::vector<Tensor>& params, AdamHyper h) : hyper(h) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.push_back(Tensor::zeros_like(p));
    v.push_back(Tensor::zeros_like(p));
  }
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               std::span<const std::string> names) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: params, grads and optimizer state disagree on tensor count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = i < names.size() ? names[i] : "param[" + std::to_string(i) + "]";
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape()) {
      throw ShapeError("adam_step: shape mismatch for " + name + ": param " + shape_string(params[i].shape()) +
                       ", grad " + shape_string(grads[i].shape()));
    }
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient in " + name);
  }

  const AdamHyper& h = state.hyper;
  state.t += 1;
  const double c1 = 1.0 - std::pow(h.beta1, double(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].raw();
    const double* g = grads[i].raw();
    double* m = state.m[i].raw();
    double* v = state.v[i].raw();
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

void EmaConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("EMA decay alpha must satisfy 0 <= alpha < 1, got " + std::to_string(alpha));
  }
}

void ema_update(std::span<Tensor> teacher, std::span<const Tensor> student, const EmaConfig& cfg) {
  cfg.validate();
  if (teacher.size() != student.size()) throw ShapeError("ema_update: teacher/student tensor count differs");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].shape() != student[i].shape()) {
      throw ShapeError("ema_update: shape mismatch " + shape_string(teacher[i].shape()) + " vs " +
                       shape_string(student[i].shape()));
    }
    double* t = teacher[i].raw();
    const double* s = student[i].raw();
    for (std::size_t k = 0; k < teacher[i].size(); ++k) {
      if (t[k] == s[k]) continue;
      const double blended = cfg.alpha * t[k] + (1.0 - cfg.alpha) * s[k];
      // rounding must not leave the segment [t, s]
      t[k] = std::clamp(blended, std::min(t[k], s[k]), std::max(t[k], s[k]));
    }
  }
}

void ema_update(nn::Network& teacher, const nn::Network& student, const EmaConfig& cfg) {
  if (!(teacher.architecture() == student.architecture())) {
    throw ShapeError("ema_update: teacher and student architectures differ");
  }
  ema_update(teacher.parameters(), student.parameters(), cfg);
  switch (cfg.running_stats) {
    case RunningStats::copy:
      teacher.running_stats() = student.running_stats();
      break;
    case RunningStats::ema:
      ema_update(teacher.running_stats(), student.running_stats(), cfg);
      break;
    case RunningStats::keep:
      break;
  }
}

}  // namespace solarda::optim
