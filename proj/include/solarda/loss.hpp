#pragma once

#include <cstddef>
#include <vector>

#include "solarda/tensor.hpp"

namespace solarda::nn {

/// Class ids per batch row; kUnlabeled marks rows without a label.
using Labels = std::vector<int>;
/// true = row belongs to the annotated subset.
using Mask = std::vector<bool>;

inline constexpr int kUnlabeled = -1;

/// Row-wise softmax with max subtraction. temperature divides the logits.
Tensor softmax(const Tensor& logits, double temperature = 1.0);

/// Row-wise log-softmax (log-sum-exp form).
Tensor log_softmax(const Tensor& logits);

/// Mean of -log p[label] over masked rows; exactly 0 if no row is masked.
double cross_entropy_hard(const Tensor& logits, const Labels& labels, const Mask& mask);
/// d(cross_entropy_hard)/d(logits).
Tensor cross_entropy_hard_grad(const Tensor& logits, const Labels& labels, const Mask& mask);

/// Mean over rows of -sum_c teacher_c log softmax(student)_c. teacher_probs
/// is treated as a constant; rows must sum to 1 within 1e-9.
double cross_entropy_soft(const Tensor& teacher_probs, const Tensor& student_logits);
Tensor cross_entropy_soft_grad(const Tensor& teacher_probs, const Tensor& student_logits);

/// Row-mean Shannon entropy of a probability matrix.
double mean_entropy(const Tensor& probs);

struct LossReport {
  double l_cons = 0.0;
  double l_ce = 0.0;
  double l_total = 0.0;
  double lambda = 1.0;
  std::size_t n_labeled = 0;
  std::size_t n_total = 0;
};

/// l_total = l_cons + lambda * l_ce.
LossReport total_loss(const Tensor& teacher_probs, const Tensor& student_logits, const Labels& labels,
                      const Mask& mask, double lambda);
/// Gradient of l_total w.r.t. the student logits.
Tensor total_loss_grad(const Tensor& teacher_probs, const Tensor& student_logits, const Labels& labels,
                       const Mask& mask, double lambda);

/// Index of the largest entry per row; ties resolve to the lowest class id.
std::vector<int> argmax_rows(const Tensor& scores);

}  // namespace solarda::nn
