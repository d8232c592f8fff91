#include <doctest.h>

#include <limits>
#include <random>
#include <vector>

#include "solarda/errors.hpp"
#include "solarda/tensor.hpp"

using namespace solarda;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// c[i][j] = sum_p A(i,p) B(p,j), with element accessors supplied by the caller.
template <class A, class B>
std::vector<double> naive(std::size_t m, std::size_t n, std::size_t k, A a, B b, std::vector<double> c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(p, j);
      c[i * n + j] += s;
    }
  return c;
}

}  // namespace

TEST_CASE("tensor construction and shape bookkeeping") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.dim(1) == 3);
  CHECK(t.at(1, 2) == 1.5);
  t.at(0, 1) = 4.0;
  CHECK(t[1] == 4.0);
  CHECK(t.row(0)[1] == 4.0);
  CHECK(shape_string(t.shape()) == "[2x3]");
  CHECK(shape_product({4, 5, 6}) == 120);

  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.reshape({4, 2}), ShapeError);
  t.reshape({3, 2});
  CHECK(t.dim(0) == 3);
  CHECK(t.reshaped({6}).rank() == 1);
}

TEST_CASE("finite check and max_abs_diff") {
  Tensor a({3}, std::vector<double>{1, 2, 3});
  Tensor b({3}, std::vector<double>{1, 2.5, 2});
  CHECK(max_abs_diff(a, b) == 1.0);
  CHECK(a.all_finite());
  a[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(a.all_finite());
  CHECK_THROWS_AS(max_abs_diff(a, Tensor({4})), ShapeError);
}

TEST_CASE("gemm kernels agree with a naive triple loop") {
  std::mt19937_64 rng(11);
  // Sizes straddle the register tile so both the tiled body and the tails run.
  const std::size_t sizes[][3] = {{1, 1, 1}, {3, 5, 2}, {4, 16, 3}, {9, 33, 7}, {17, 5, 64}, {64, 32, 48}, {130, 70, 19}};
  for (const auto& s : sizes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(k);
    const auto a = random_values(m * k, rng);
    const auto b = random_values(k * n, rng);
    const auto c0 = random_values(m * n, rng);

    auto c = c0;
    gemm_nn(m, n, k, a.data(), b.data(), c.data());
    auto ref = naive(
        m, n, k, [&](std::size_t i, std::size_t p) { return a[i * k + p]; },
        [&](std::size_t p, std::size_t j) { return b[p * n + j]; }, c0);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    // a stored [k x m]
    c = c0;
    gemm_tn(m, n, k, a.data(), b.data(), c.data());
    ref = naive(
        m, n, k, [&](std::size_t i, std::size_t p) { return a[p * m + i]; },
        [&](std::size_t p, std::size_t j) { return b[p * n + j]; }, c0);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    // b stored [n x k]
    c = c0;
    gemm_nt(m, n, k, a.data(), b.data(), c.data());
    ref = naive(
        m, n, k, [&](std::size_t i, std::size_t p) { return a[i * k + p]; },
        [&](std::size_t p, std::size_t j) { return b[j * k + p]; }, c0);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("gemm accumulates into c") {
  std::vector<double> a{1, 2, 3, 4};  // 2x2
  std::vector<double> b{5, 6, 7, 8};
  std::vector<double> c{1, 1, 1, 1};
  gemm_nn(2, 2, 2, a.data(), b.data(), c.data());
  CHECK(c == std::vector<double>{20, 23, 44, 51});
}
