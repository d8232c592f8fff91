#include "solarda/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "solarda/errors.hpp"

namespace solarda::nn {

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " must be a [B x C] matrix, got " + shape_string(t.shape()));
}

void check_labels(const Tensor& logits, const Labels& labels, const Mask& mask) {
  require_matrix(logits, "logits");
  const std::size_t rows = logits.dim(0);
  if (labels.size() != rows || mask.size() != rows) {
    throw ShapeError("labels/mask length must equal batch size " + std::to_string(rows));
  }
  const int classes = int(logits.dim(1));
  for (std::size_t i = 0; i < rows; ++i) {
    if (mask[i] && (labels[i] < 0 || labels[i] >= classes)) {
      throw std::out_of_range("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

void check_teacher(const Tensor& teacher, const Tensor& student) {
  require_matrix(teacher, "teacher_probs");
  require_matrix(student, "student_logits");
  if (teacher.shape() != student.shape()) {
    throw ShapeError("teacher " + shape_string(teacher.shape()) + " vs student " + shape_string(student.shape()));
  }
  for (std::size_t i = 0; i < teacher.dim(0); ++i) {
    double sum = 0.0;
    for (double p : teacher.row(i)) {
      if (!(p >= 0.0)) throw std::domain_error("teacher row " + std::to_string(i) + " has a negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::domain_error("teacher row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                              ", not a distribution");
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& logits, double temperature) {
  require_matrix(logits, "logits");
  if (!(temperature > 0.0)) throw std::domain_error("softmax temperature must be positive");
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    auto in = logits.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp((in[c] - mx) / temperature);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

Tensor log_softmax(const Tensor& logits) {
  require_matrix(logits, "logits");
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    auto in = logits.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double v : in) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - lse;
  }
  return out;
}

double cross_entropy_hard(const Tensor& logits, const Labels& labels, const Mask& mask) {
  check_labels(logits, labels, mask);
  const Tensor logp = log_softmax(logits);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    if (!mask[i]) continue;
    sum -= logp.at(i, std::size_t(labels[i]));
    ++n;
  }
  return n == 0 ? 0.0 : sum / double(n);
}

Tensor cross_entropy_hard_grad(const Tensor& logits, const Labels& labels, const Mask& mask) {
  check_labels(logits, labels, mask);
  const std::size_t n = std::size_t(std::count(mask.begin(), mask.end(), true));
  Tensor grad(logits.shape());
  if (n == 0) return grad;
  const Tensor p = softmax(logits);
  const double scale = 1.0 / double(n);
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    if (!mask[i]) continue;
    for (std::size_t c = 0; c < logits.dim(1); ++c) {
      grad.at(i, c) = (p.at(i, c) - (int(c) == labels[i] ? 1.0 : 0.0)) * scale;
    }
  }
  return grad;
}

double cross_entropy_soft(const Tensor& teacher_probs, const Tensor& student_logits) {
  check_teacher(teacher_probs, student_logits);
  const std::size_t rows = student_logits.dim(0);
  if (rows == 0) return 0.0;
  const Tensor logq = log_softmax(student_logits);
  double sum = 0.0;
  for (std::size_t k = 0; k < logq.size(); ++k) {
    if (teacher_probs[k] != 0.0) sum -= teacher_probs[k] * logq[k];
  }
  return sum / double(rows);
}

Tensor cross_entropy_soft_grad(const Tensor& teacher_probs, const Tensor& student_logits) {
  check_teacher(teacher_probs, student_logits);
  const std::size_t rows = student_logits.dim(0);
  Tensor grad = softmax(student_logits);
  if (rows == 0) return grad;
  const double scale = 1.0 / double(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    auto t = teacher_probs.row(i);
    auto g = grad.row(i);
    double tsum = 0.0;
    for (double v : t) tsum += v;
    // d/dz of -sum_c t_c log softmax(z)_c = softmax(z) * sum(t) - t
    for (std::size_t c = 0; c < g.size(); ++c) g[c] = (g[c] * tsum - t[c]) * scale;
  }
  return grad;
}

double mean_entropy(const Tensor& probs) {
  require_matrix(probs, "probs");
  if (probs.dim(0) == 0) return 0.0;
  double sum = 0.0;
  for (double p : probs.data()) {
    if (p > 0.0) sum -= p * std::log(p);
  }
  return sum / double(probs.dim(0));
}

LossReport total_loss(const Tensor& teacher_probs, const Tensor& student_logits, const Labels& labels,
                      const Mask& mask, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  LossReport r;
  r.lambda = lambda;
  r.l_cons = cross_entropy_soft(teacher_probs, student_logits);
  r.l_ce = cross_entropy_hard(student_logits, labels, mask);
  r.l_total = r.l_cons + lambda * r.l_ce;
  r.n_labeled = std::size_t(std::count(mask.begin(), mask.end(), true));
  r.n_total = student_logits.dim(0);
  return r;
}

Tensor total_loss_grad(const Tensor& teacher_probs, const Tensor& student_logits, const Labels& labels,
                       const Mask& mask, double lambda) {
  Tensor g = cross_entropy_soft_grad(teacher_probs, student_logits);
  if (lambda != 0.0) {
    const Tensor ce = cross_entropy_hard_grad(student_logits, labels, mask);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += lambda * ce[k];
  }
  return g;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  require_matrix(scores, "scores");
  std::vector<int> out(scores.dim(0));
  for (std::size_t i = 0; i < scores.dim(0); ++i) {
    auto r = scores.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.size(); ++c) {
      if (r[c] > r[best]) best = c;
    }
    out[i] = int(best);
  }
  return out;
}

}  // namespace solarda::nn
