#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "solarda/errors.hpp"
#include "solarda/train.hpp"

using namespace solarda;
using namespace solarda::train;

namespace {

// Three Gaussian blobs in 6-D, labels 0..2.
data::Dataset blobs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.4);
  data::Dataset ds;
  for (int f = 0; f < 6; ++f) ds.feature_names.push_back("f" + std::to_string(f));
  for (std::size_t i = 0; i < n; ++i) {
    const int c = int(i % 3);
    for (int f = 0; f < 6; ++f) ds.features.push_back(g(rng) + (f == c ? 2.0 : 0.0) - (f == c + 3 ? 1.5 : 0.0));
    ds.labels.push_back(c);
    ds.power_kw.push_back(0);
    ds.power_frac.push_back(0);
    ds.timestamps.push_back(data::Minutes(i) * 30);
  }
  return ds;
}

nn::Architecture small_arch(std::size_t classes = 3) {
  return nn::default_architecture({.n_classes = classes, .conv1_channels = 4, .conv2_channels = 4, .hidden = 16});
}

}  // namespace

TEST_CASE("epoch batches partition the rows") {
  const auto b = epoch_batches(2500, 1000, 3, true);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 1000);
  CHECK(b[2].size() == 500);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(2500);
  std::iota(expected.begin(), expected.end(), 0);
  CHECK(all == expected);
  CHECK(epoch_batches(2500, 1000, 3, true) == b);
  CHECK(epoch_batches(2500, 1000, 4, true) != b);
}

TEST_CASE("a trailing singleton joins the previous batch") {
  const auto merged = epoch_batches(2001, 1000, 1, true);
  REQUIRE(merged.size() == 2);
  CHECK(merged[1].size() == 1001);
  const auto kept = epoch_batches(2001, 1000, 1, false);
  CHECK(kept.size() == 3);
  CHECK(epoch_batches(1, 1000, 1, true).size() == 1);
}

TEST_CASE("training config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.max_epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("source training fits separable blobs") {
  const auto train = blobs(600, 1);
  const auto val = blobs(150, 2);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch_size = 64;
  cfg.max_epochs = 30;
  cfg.patience = 5;
  cfg.seed = 3;
  const TrainResult r = train_source(train, val, small_arch(), cfg);
  CHECK(r.model.mode() == nn::Mode::eval);
  CHECK(r.history.size() <= 30);
  CHECK(r.best_epoch < r.history.size());
  CHECK(r.best_val_accuracy == r.history[r.best_epoch].val_accuracy);
  for (const auto& h : r.history) CHECK(h.val_accuracy <= r.best_val_accuracy);
  CHECK(evaluate(r.model, blobs(300, 9)).accuracy > 0.97);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
}

TEST_CASE("training memorises a tiny set without validation data") {
  auto train = blobs(24, 5);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(0, 2);
  for (int& l : train.labels) l = u(rng);  // arbitrary labels, pure memorisation
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch_size = 24;
  cfg.max_epochs = 400;
  cfg.patience = 400;
  const TrainResult r = train_source(train, data::Dataset{}, nn::default_architecture({.n_classes = 3}), cfg);
  CHECK(r.best_val_accuracy == 1.0);
  CHECK(evaluate(r.model, train).accuracy == 1.0);
}

TEST_CASE("patience stops training") {
  const auto train = blobs(90, 1);
  TrainConfig cfg;
  cfg.lr = 1e-12;  // weights barely move, so val accuracy soon stops improving
  cfg.batch_size = 30;
  cfg.max_epochs = 50;
  cfg.patience = 3;
  const TrainResult r = train_source(train, blobs(30, 2), small_arch(), cfg);
  CHECK(r.history.size() < 50);
  CHECK(r.history.size() == r.best_epoch + 4);
}

TEST_CASE("training is deterministic per seed") {
  const auto train = blobs(200, 1);
  const auto val = blobs(60, 2);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 50;
  cfg.max_epochs = 3;
  cfg.seed = 17;
  const auto a = train_source(train, val, small_arch(), cfg);
  const auto b = train_source(train, val, small_arch(), cfg);
  CHECK(a.model.parameters() == b.model.parameters());
  CHECK(a.model.running_stats() == b.model.running_stats());
  cfg.seed = 18;
  CHECK(train_source(train, val, small_arch(), cfg).model.parameters() != a.model.parameters());
}

TEST_CASE("training rejects unusable inputs") {
  auto train = blobs(30, 1);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  CHECK_THROWS_AS(train_source(data::Dataset{}, data::Dataset{}, small_arch(), cfg), DataError);
  auto partial = train;
  partial.labels[0] = nn::kUnlabeled;
  CHECK_THROWS_AS(train_source(partial, data::Dataset{}, small_arch(), cfg), DataError);
  CHECK_THROWS_AS(train_source(train, data::Dataset{}, nn::default_architecture({.n_features = 5}), cfg), ShapeError);
  auto bad = train;
  bad.features[7] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_source(bad, data::Dataset{}, small_arch(), cfg), NumericError);
}

TEST_CASE("chunked prediction equals a single eval forward") {
  nn::Network net(small_arch());
  net.init(4);
  net.set_mode(nn::Mode::eval);
  const auto ds = blobs(5000, 3);
  const Tensor chunked = predict_logits(net, ds);
  const Tensor whole = net.forward(ds.all_features());
  CHECK(max_abs_diff(chunked, whole) == 0.0);
  CHECK(predict(net, ds) == nn::argmax_rows(whole));
}

TEST_CASE("evaluation report arithmetic") {
  const std::vector<int> truth{0, 0, 1, 1, 2, 2};
  const std::vector<int> pred{0, 1, 1, 1, 0, 2};
  const EvalReport r = make_report(pred, truth, 4);
  CHECK(r.n == 6);
  CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
  CHECK(r.confusion[0] == std::vector<std::size_t>{1, 1, 0, 0});
  CHECK(r.confusion[2] == std::vector<std::size_t>{1, 0, 1, 0});
  CHECK(r.precision[0] == 0.5);
  CHECK(r.precision[1] == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall[2] == 0.5);
  CHECK(r.precision[3] == 0.0);
  CHECK(r.recall[3] == 0.0);
  CHECK_THROWS_AS(make_report({0}, {0, 1}, 2), ShapeError);
  CHECK_THROWS_AS(make_report({5}, {0}, 2), DataError);

  nn::Network net(small_arch());
  net.init(1);
  auto ds = blobs(9, 1);
  ds.labels[2] = nn::kUnlabeled;
  CHECK_THROWS_AS(evaluate(net, ds), DataError);
  CHECK(std::isfinite(mean_loss(net, ds)));
}
