#include "solarda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "solarda/errors.hpp"

namespace solarda {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not hold " +
                     std::to_string(data_.size()) + " elements");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  }
  return shape_[axis];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t width = data_.size() / shape_[0];
  return {data_.data() + r * width, width};
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t width = data_.size() / shape_[0];
  return {data_.data() + r * width, width};
}

void Tensor::reshape(Shape shape) {
  if (shape_product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

namespace {

constexpr std::size_t kMR = 4;
constexpr std::size_t kNR = 16;
using Lane = double __attribute__((vector_size(64)));  // 8 doubles

inline Lane load(const double* p) {
  Lane v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_add(double* p, Lane v) {
  Lane cur;
  std::memcpy(&cur, p, sizeof cur);
  cur += v;
  std::memcpy(p, &cur, sizeof cur);
}

// C[i..i+kMR, j..j+kNR] += A B with the tile held in registers.
inline void micro_tile(std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  Lane acc[kMR][2] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const Lane b0 = load(b + p * n);
    const Lane b1 = load(b + p * n + 8);
    for (std::size_t r = 0; r < kMR; ++r) {
      const double av = a[r * k + p];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < kMR; ++r) {
    store_add(c + r * n, acc[r][0]);
    store_add(c + r * n + 8, acc[r][1]);
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* src, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  const std::size_t n_tiled = n - n % kNR;
  const std::size_t m_tiled = m - m % kMR;
  for (std::size_t i = 0; i < m_tiled; i += kMR) {
    for (std::size_t j = 0; j < n_tiled; j += kNR) micro_tile(n, k, a + i * k, b + j, c + i * n + j);
  }
  for (std::size_t i = 0; i < m; ++i) {
    // leftover columns for every row, all columns for leftover rows
    const std::size_t j0 = i < m_tiled ? n_tiled : 0;
    if (j0 == n) continue;
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = j0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  thread_local std::vector<double> at;
  transpose(k, m, a, at);
  gemm_nn(m, n, k, at.data(), b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  thread_local std::vector<double> bt;
  transpose(n, k, b, bt);
  gemm_nn(m, n, k, a, bt.data(), c);
}

}  // namespace solarda
