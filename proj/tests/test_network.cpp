#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "solarda/errors.hpp"
#include "solarda/gradcheck.hpp"
#include "solarda/loss.hpp"
#include "solarda/network.hpp"

using namespace solarda;
using namespace solarda::nn;

namespace {

Tensor random_batch(std::size_t b, std::size_t f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t({b, f});
  for (double& v : t.data()) v = g(rng);
  return t;
}

Labels random_labels(std::size_t b, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, classes - 1);
  Labels l(b);
  for (int& v : l) v = u(rng);
  return l;
}

void randomise(Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : net.parameters())
    for (double& v : p.data()) v = u(rng);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  auto& rs = net.running_stats();
  for (std::size_t i = 0; i < rs.size(); ++i)
    for (double& v : rs[i].data()) v = i % 2 ? pos(rng) : u(rng);
}

using Act = std::vector<std::vector<std::vector<double>>>;  // [b][channel][position]

// Straight-line reimplementation of the layer maths, one sample and one
// output element at a time.
std::vector<std::vector<double>> scalar_forward(const Network& net, const Tensor& batch) {
  const auto& arch = net.architecture();
  const std::size_t b = batch.dim(0);
  const auto& P = net.parameters();
  const auto& R = net.running_stats();
  std::size_t pi = 0, ri = 0;

  Act x(b, std::vector<std::vector<double>>(arch.input_shape[0],
                                            std::vector<double>(arch.input_shape[1])));
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t c = 0; c < arch.input_shape[0]; ++c)
      for (std::size_t t = 0; t < arch.input_shape[1]; ++t) x[s][c][t] = batch.at(s, c * arch.input_shape[1] + t);
  std::vector<std::vector<double>> flat;

  for (const auto& spec : arch.layers) {
    if (const auto* c = std::get_if<Conv1DSpec>(&spec)) {
      const Tensor& w = P[pi++];
      const Tensor* bias = c->bias ? &P[pi++] : nullptr;
      const std::size_t len = x[0][0].size();
      const std::size_t lout = len + 2 * c->padding - c->kernel + 1;
      Act y(b, std::vector<std::vector<double>>(c->out_channels, std::vector<double>(lout)));
      for (std::size_t s = 0; s < b; ++s)
        for (std::size_t co = 0; co < c->out_channels; ++co)
          for (std::size_t t = 0; t < lout; ++t) {
            double acc = bias ? (*bias)[co] : 0.0;
            for (std::size_t ci = 0; ci < c->in_channels; ++ci)
              for (std::size_t k = 0; k < c->kernel; ++k) {
                const long pos = long(t + k) - long(c->padding);
                if (pos < 0 || pos >= long(len)) continue;
                acc += x[s][ci][std::size_t(pos)] * w[(ci * c->kernel + k) * c->out_channels + co];
              }
            y[s][co][t] = acc;
          }
      x = y;
    } else if (const auto* bn = std::get_if<BatchNorm1DSpec>(&spec)) {
      const Tensor& gamma = P[pi++];
      const Tensor& beta = P[pi++];
      const Tensor& rmean = R[ri++];
      const Tensor& rvar = R[ri++];
      for (std::size_t c = 0; c < bn->channels; ++c) {
        double mean = rmean[c], var = rvar[c];
        if (net.mode() == Mode::train) {
          double s1 = 0.0, n = 0.0;
          for (std::size_t s = 0; s < b; ++s)
            for (double v : x[s][c]) s1 += v, n += 1.0;
          mean = s1 / n;
          double s2 = 0.0;
          for (std::size_t s = 0; s < b; ++s)
            for (double v : x[s][c]) s2 += (v - mean) * (v - mean);
          var = s2 / n;
        }
        for (std::size_t s = 0; s < b; ++s)
          for (double& v : x[s][c]) v = gamma[c] * (v - mean) / std::sqrt(var + bn->eps) + beta[c];
      }
    } else if (std::holds_alternative<ReLUSpec>(spec)) {
      if (flat.empty()) {
        for (auto& s : x)
          for (auto& ch : s)
            for (double& v : ch) v = std::max(v, 0.0);
      } else {
        for (auto& s : flat)
          for (double& v : s) v = std::max(v, 0.0);
      }
    } else if (std::holds_alternative<FlattenSpec>(spec)) {
      flat.assign(b, {});
      for (std::size_t s = 0; s < b; ++s)
        for (auto& ch : x[s]) flat[s].insert(flat[s].end(), ch.begin(), ch.end());
    } else {
      const auto& d = std::get<DenseSpec>(spec);
      const Tensor& w = P[pi++];
      const Tensor& bias = P[pi++];
      std::vector<std::vector<double>> y(b, std::vector<double>(d.out_features));
      for (std::size_t s = 0; s < b; ++s)
        for (std::size_t o = 0; o < d.out_features; ++o) {
          double acc = bias[o];
          for (std::size_t i = 0; i < d.in_features; ++i) acc += flat[s][i] * w[i * d.out_features + o];
          y[s][o] = acc;
        }
      flat = y;
    }
  }
  return flat;
}

Architecture dense_only(std::size_t in, std::size_t out) {
  return Architecture{{in}, {DenseSpec{in, out}}};
}

}  // namespace

TEST_CASE("default architecture layout") {
  const Architecture arch = default_architecture();
  CHECK(arch.input_shape == Shape{1, 6});
  REQUIRE(arch.layers.size() == 10);
  Network net(arch);
  CHECK(net.input_width() == 6);
  CHECK(net.output_width() == 5);
  // conv 48 + bn 32 + conv 1536 + bn 64 + dense 192*64+64 + dense 64*5+5
  CHECK(net.parameter_count() == 48 + 32 + 1536 + 64 + 12352 + 325);
  CHECK(net.running_stats().size() == 4);
  CHECK(net.parameter_names().front() == "layer0.conv1d.weight");
  CHECK_NOTHROW(net.require_classifier_head());
}

TEST_CASE("zero weights give zero logits") {
  Network net(default_architecture());
  net.set_mode(Mode::eval);
  for (auto& p : net.parameters()) p.fill(0.0);
  const Tensor y = net.forward(random_batch(4, 6, 1));
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("identity dense layer passes its input through") {
  Network net(dense_only(5, 5));
  auto& w = net.parameters()[0];
  for (std::size_t i = 0; i < 5; ++i) w.at(i, i) = 1.0;
  const Tensor x({1, 5}, std::vector<double>{1, 2, 3, 4, 5});
  CHECK(net.forward(x) == x);
}

TEST_CASE("default network matches a scalar reimplementation") {
  Network net(default_architecture());
  net.init(42);
  randomise(net, 42);
  const Tensor batch = random_batch(7, 6, 42);

  for (Mode mode : {Mode::eval, Mode::train}) {
    CAPTURE(int(mode));
    Network work = net;
    work.set_mode(mode);
    const auto expected = scalar_forward(work, batch);
    const Tensor got = work.forward(batch);
    REQUIRE(got.shape() == Shape{7, 5});
    for (std::size_t s = 0; s < 7; ++s)
      for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(got.at(s, c) - expected[s][c]) < 1e-10);
  }
}

TEST_CASE("conv with bias and no padding matches the scalar oracle") {
  Architecture arch{{2, 7},
                    {Conv1DSpec{2, 3, 4, 0, true}, ReLUSpec{}, FlattenSpec{}, DenseSpec{12, 2}}};
  Network net(arch);
  net.set_mode(Mode::eval);
  randomise(net, 3);
  const Tensor batch = random_batch(3, 14, 4);
  const auto expected = scalar_forward(net, batch);
  const Tensor got = net.forward(batch);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(got.at(s, c) - expected[s][c]) < 1e-12);
}

TEST_CASE("batchnorm normalises each channel in train mode") {
  const std::size_t ch = 3, len = 4, b = 9;
  Network net(Architecture{{ch, len}, {BatchNorm1DSpec{ch}, FlattenSpec{}}});
  Tensor x = random_batch(b, ch * len, 5);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 10.0 * x[i] + 7.0;
  const Tensor y = net.forward(x);
  for (std::size_t c = 0; c < ch; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t t = 0; t < len; ++t) mean += y.at(s, c * len + t);
    mean /= double(b * len);
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t t = 0; t < len; ++t) sq += std::pow(y.at(s, c * len + t) - mean, 2);
    const double var = sq / double(b * len);
    CHECK(std::abs(mean) < 1e-8);
    // eps = 1e-5 is inside the square root, so the batch variance is var/(var+eps)
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("batchnorm running statistics use momentum 0.1 and the unbiased variance") {
  Network net(Architecture{{1, 2}, {BatchNorm1DSpec{1}, FlattenSpec{}}});
  const Tensor x({2, 2}, std::vector<double>{1, 2, 3, 4});
  net.forward(x);
  // mean 2.5, population variance 1.25, unbiased 5/3
  CHECK(net.running_stats()[0][0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(net.running_stats()[1][0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0).epsilon(1e-15));
  net.set_mode(Mode::eval);
  net.forward(x);
  CHECK(net.running_stats()[0][0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("eval forward is deterministic and leaves state alone") {
  Network net(default_architecture());
  net.init(9);
  net.set_mode(Mode::eval);
  const Tensor batch = random_batch(16, 6, 9);
  const Tensor a = net.forward(batch);
  const auto stats = net.running_stats();
  const Tensor b = net.forward(batch);
  CHECK(a == b);
  CHECK(stats == net.running_stats());
}

TEST_CASE("forward and backward reject bad calls") {
  Network net(default_architecture());
  net.init(1);
  CHECK_THROWS_AS(net.forward(Tensor({2, 5})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor({1, 6})), ShapeError);  // BN needs B >= 2 in train mode
  net.set_mode(Mode::eval);
  CHECK_NOTHROW(net.forward(Tensor({1, 6})));
  Network fresh(default_architecture());
  CHECK_THROWS_AS(fresh.backward(Tensor({2, 5})), StateError);
  fresh.forward(Tensor({2, 6}));
  CHECK_THROWS_AS(fresh.backward(Tensor({3, 5})), ShapeError);

  CHECK_THROWS_AS(Network(Architecture{{6}, {DenseSpec{5, 2}}}), ShapeError);
  CHECK_THROWS_AS(Network(Architecture{{2, 6}, {Conv1DSpec{1, 4, 3, 1, false}}}), ShapeError);
  CHECK_THROWS_AS(Network(Architecture{{6}, {ReLUSpec{}}}).require_classifier_head(), ShapeError);
}

TEST_CASE("backward: trivial cases") {
  Network net(default_architecture());
  net.init(2);
  const Tensor batch = random_batch(4, 6, 2);
  net.forward(batch);
  const auto params = net.parameters();
  const Gradients g = net.backward(Tensor({4, 5}));
  for (const auto& t : g.params)
    for (double v : t.data()) CHECK(v == 0.0);
  CHECK(params == net.parameters());

  // y = x W, L = sum(y): dL/dW = outer(x, 1) summed over the batch.
  Network lin(dense_only(3, 2));
  const Tensor x({1, 3}, std::vector<double>{1, -2, 5});
  lin.forward(x);
  const Gradients lg = lin.backward(Tensor({1, 2}, 1.0));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t o = 0; o < 2; ++o) CHECK(lg.params[0].at(i, o) == x[i]);
  CHECK(lg.params[1] == Tensor({2}, 1.0));
}

TEST_CASE("default network gradients match central differences") {
  Network net(default_architecture());
  net.init(7);
  const Tensor batch = random_batch(8, 6, 7);
  const Labels labels = random_labels(8, 5, 7);
  const GradCheckResult r = grad_check(net, batch, labels, 1e-5);
  CAPTURE(r.worst_parameter);
  CHECK(r.checked == net.parameter_count());
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad check detects a corrupted dense gradient") {
  Network net(default_architecture());
  net.init(7);
  const Tensor batch = random_batch(8, 6, 7);
  const Labels labels = random_labels(8, 5, 7);
  auto analytic = analytic_gradients(net, batch, labels);
  for (double& v : analytic[6].data()) v *= 1.01;  // layer7.dense.weight
  CHECK(net.parameter_names()[6] == "layer7.dense.weight");
  CHECK(compare_with_finite_differences(net, batch, labels, analytic, 1e-5).max_rel_error > 1e-3);
}

TEST_CASE("grad check on a parameter-free network is zero") {
  Network net(Architecture{{4}, {ReLUSpec{}}});
  const GradCheckResult r = grad_check(net, random_batch(3, 4, 1), Labels{0, 1, 2});
  CHECK(r.max_rel_error == 0.0);
  CHECK(r.checked == 0);
}

TEST_CASE("input gradients match central differences for every layer kind") {
  const std::vector<Architecture> archs = {
      {{2, 5}, {Conv1DSpec{2, 3, 3, 1, true}, FlattenSpec{}}},
      {{3, 4}, {BatchNorm1DSpec{3}, FlattenSpec{}}},
      {{6}, {ReLUSpec{}}},
      {{6}, {DenseSpec{6, 4}}},
      {{2, 3}, {FlattenSpec{}}},
  };
  for (std::size_t a = 0; a < archs.size(); ++a) {
    CAPTURE(a);
    Network net(archs[a]);
    randomise(net, 100 + a);
    const std::size_t width = net.input_width();
    const Tensor x = random_batch(5, width, 200 + a);
    Network probe = net;
    const Tensor y = probe.forward(x);
    const Tensor w = random_batch(5, y.dim(1), 300 + a);  // L = sum(w * y)
    const Tensor analytic = probe.backward(w).input;
    const double eps = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto loss = [&](double shift) {
        Tensor xs = x;
        xs[i] += shift;
        Network n2 = net;
        const Tensor out = n2.forward(xs);
        double s = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) s += w[j] * out[j];
        return s;
      };
      const double numeric = (loss(eps) - loss(-eps)) / (2 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      CHECK(std::abs(numeric - analytic[i]) / denom < 1e-4);
    }
  }
}
