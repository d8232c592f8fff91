#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "solarda/adapt.hpp"
#include "solarda/errors.hpp"

using namespace solarda;
using namespace solarda::adapt;

namespace {

// Blobs whose class means are shifted between domains.
data::Dataset blobs(std::size_t n, std::uint64_t seed, double shift, data::Domain domain) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.6);
  data::Dataset ds;
  ds.domain = domain;
  for (int f = 0; f < 6; ++f) ds.feature_names.push_back("f" + std::to_string(f));
  for (std::size_t i = 0; i < n; ++i) {
    const int c = int(i % 3);
    for (int f = 0; f < 6; ++f) ds.features.push_back(g(rng) + (f == c ? 2.0 : 0.0) + shift * (f == 4 ? 1.0 : 0.3));
    ds.labels.push_back(c);
    ds.power_kw.push_back(0);
    ds.power_frac.push_back(0);
    ds.timestamps.push_back(data::Minutes(i) * 30);
  }
  return ds;
}

nn::Architecture arch() {
  return nn::default_architecture({.n_classes = 3, .conv1_channels = 4, .conv2_channels = 4, .hidden = 16});
}

nn::Network source_model() {
  static const nn::Network net = [] {
    train::TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.batch_size = 50;
    cfg.max_epochs = 15;
    cfg.seed = 1;
    return train::train_source(blobs(300, 1, 0.0, data::Domain::source), blobs(90, 2, 0.0, data::Domain::source),
                               arch(), cfg)
        .model;
  }();
  return net;
}

TargetSplits target(double p, std::uint64_t seed = 5) {
  const auto tr = data::annotate_fraction(blobs(200, 10, 1.0, data::Domain::target), p, seed);
  const auto va = data::annotate_fraction(blobs(60, 11, 1.0, data::Domain::target), p, seed + 1);
  return TargetSplits(tr, va, blobs(90, 12, 1.0, data::Domain::target));
}

AdaptConfig quick(double p) {
  AdaptConfig c;
  c.p = p;
  c.epochs = 3;
  c.batch_size = 64;
  c.lr = 1e-3;
  c.seed = 9;
  return c;
}

std::vector<std::size_t> range(std::size_t b, std::size_t e) {
  std::vector<std::size_t> v;
  for (std::size_t i = b; i < e; ++i) v.push_back(i);
  return v;
}

}  // namespace

TEST_CASE("adapt config validation") {
  AdaptConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lambda = -0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.p = 120;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.temperature = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.labeled_fraction_per_batch = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("target splits accept target-domain data only") {
  const auto src = blobs(20, 1, 0.0, data::Domain::source);
  const auto tgt = blobs(20, 1, 0.0, data::Domain::target);
  const auto annotated = data::annotate_fraction(tgt, 20, 1);
  CHECK_THROWS_AS(TargetSplits(data::annotate_fraction(src, 20, 1), tgt, tgt), ContractError);
  CHECK_THROWS_AS(TargetSplits(annotated, src, tgt), ContractError);
  CHECK_THROWS_AS(TargetSplits(annotated, tgt, src), ContractError);
  CHECK_THROWS_AS(TargetSplits(tgt, tgt, tgt), DataError);  // no annotation mask
  CHECK_NOTHROW(TargetSplits(annotated, tgt, tgt));
}

TEST_CASE("steps per epoch") {
  AdaptConfig c;
  c.batch_size = 1000;
  CHECK(steps_per_epoch(12264, c) == 13);
  CHECK(steps_per_epoch(12001, c) == 12);
  CHECK(steps_per_epoch(1000, c) == 1);
  CHECK(steps_per_epoch(1, c) == 1);
}

TEST_CASE("natural batches cover the union once per epoch") {
  const auto lab = range(0, 37);
  const auto unl = range(37, 250);
  AdaptConfig c;
  c.batch_size = 64;
  c.seed = 3;
  const std::size_t steps = steps_per_epoch(250, c);
  std::multiset<std::size_t> seen;
  std::size_t labeled = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const Batch b = compose_batch(lab, unl, c, 0, s);
    seen.insert(b.indices.begin(), b.indices.end());
    std::size_t count = 0;
    for (std::size_t i : b.indices) count += i < 37;
    CHECK(count == b.n_labeled);
    labeled += b.n_labeled;
  }
  CHECK(seen.size() == 250);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 250);
  CHECK(labeled == 37);
  CHECK(compose_batch(lab, unl, c, 1, 0).indices == compose_batch(lab, unl, c, 1, 0).indices);
  CHECK(compose_batch(lab, unl, c, 1, 0).indices != compose_batch(lab, unl, c, 2, 0).indices);
}

TEST_CASE("batch composition at the extremes of p") {
  AdaptConfig c;
  c.batch_size = 50;
  const auto all = range(0, 120);
  const std::vector<std::size_t> none;
  for (std::size_t s = 0; s < steps_per_epoch(120, c); ++s) {
    const Batch full = compose_batch(all, none, c, 0, s);
    CHECK(full.n_labeled == full.indices.size());
    const Batch empty = compose_batch(none, all, c, 0, s);
    CHECK(empty.n_labeled == 0);
  }
  CHECK_THROWS_AS(compose_batch(none, none, c, 0, 0), DataError);
  CHECK_THROWS_AS(compose_batch(all, none, c, 0, 99), std::out_of_range);
}

TEST_CASE("fixed-ratio batches") {
  AdaptConfig c;
  c.batch_size = 1000;
  c.labeled_fraction_per_batch = 0.2;
  const auto lab = range(0, 2453);
  const auto unl = range(2453, 12264);
  for (std::size_t s = 0; s < 3; ++s) {
    const Batch b = compose_batch(lab, unl, c, 0, s);
    CHECK(b.indices.size() == 1000);
    CHECK(b.n_labeled == 200);
    CHECK(std::count_if(b.indices.begin(), b.indices.end(), [](std::size_t i) { return i < 2453; }) == 200);
  }
  // few labels: at least one per batch, never more than exist
  const auto few = range(0, 3);
  c.labeled_fraction_per_batch = 0.001;
  CHECK(compose_batch(few, unl, c, 0, 0).n_labeled == 1);
  c.labeled_fraction_per_batch = 0.5;
  CHECK(compose_batch(few, unl, c, 0, 0).n_labeled == 3);
  CHECK(compose_batch(std::vector<std::size_t>{}, unl, c, 0, 0).n_labeled == 0);
}

TEST_CASE("p = 0 gives zero cross-entropy at every step") {
  const auto r = adapt_target(source_model(), target(0), quick(0));
  REQUIRE(r.report.steps.size() == 3 * steps_per_epoch(200, quick(0)));
  for (const auto& s : r.report.steps) {
    CHECK(s.l_ce == 0.0);
    CHECK(s.l_total == s.l_cons);
    CHECK(s.n_labeled == 0);
  }
  CHECK(r.report.source_samples_read == 0);
  CHECK(r.report.target_samples_read == 3 * 200);
}

TEST_CASE("logged losses decompose and the teacher stays between its old value and the student") {
  AdaptConfig cfg = quick(20);
  cfg.lambda = 0.7;
  std::size_t observed = 0;
  bool contained = true;
  const auto r = adapt_target(source_model(), target(20), cfg, [&](const StepInfo& info) {
    ++observed;
    CHECK(std::abs(info.loss.l_total - (info.loss.l_cons + 0.7 * info.loss.l_ce)) < 1e-12);
    const auto& before = info.teacher_before.parameters();
    const auto& stu = info.student.parameters();
    const auto& after = info.teacher.parameters();
    for (std::size_t p = 0; p < after.size(); ++p)
      for (std::size_t j = 0; j < after[p].size(); ++j) {
        const double lo = std::min(before[p][j], stu[p][j]);
        const double hi = std::max(before[p][j], stu[p][j]);
        contained = contained && after[p][j] >= lo && after[p][j] <= hi;
      }
    CHECK(info.teacher.running_stats() == info.student.running_stats());
  });
  CHECK(contained);
  CHECK(observed == r.report.steps.size());
  CHECK(r.report.epochs.size() == 3);
  CHECK(r.report.delta == r.report.teacher.accuracy - r.report.no_adapt.accuracy);
}

TEST_CASE("alpha = 0 makes the teacher equal the student after one step") {
  AdaptConfig cfg = quick(20);
  cfg.alpha = 0.0;
  cfg.epochs = 1;
  bool first = true;
  adapt_target(source_model(), target(20), cfg, [&](const StepInfo& info) {
    if (!first) return;
    first = false;
    CHECK(info.teacher.parameters() == info.student.parameters());
    CHECK(info.teacher.running_stats() == info.student.running_stats());
  });
  CHECK_FALSE(first);
}

TEST_CASE("frozen limit keeps the teacher at the source model") {
  const nn::Network src = source_model();
  const auto splits = target(20);
  for (auto mode : {optim::RunningStats::keep, optim::RunningStats::ema}) {
    AdaptConfig cfg = quick(20);
    cfg.alpha = 1.0 - 1e-12;
    cfg.lr = 0.0;
    cfg.teacher_bn = mode;
    const auto r = adapt_target(src, splits, cfg);
    const Tensor a = train::predict_logits(r.teacher, splits.test());
    const Tensor b = train::predict_logits(src, splits.test());
    CHECK(max_abs_diff(a, b) < 1e-9);
    CHECK(r.report.teacher.accuracy == r.report.no_adapt.accuracy);
  }
  // Copied statistics follow the student's target batches even with lr = 0.
  AdaptConfig cfg = quick(20);
  cfg.alpha = 1.0 - 1e-12;
  cfg.lr = 0.0;
  const auto r = adapt_target(src, splits, cfg);
  CHECK(max_abs_diff(train::predict_logits(r.teacher, splits.test()), train::predict_logits(src, splits.test())) > 1e-6);
}

TEST_CASE("student gradients treat the teacher as a constant") {
  const nn::Network src = source_model();
  const auto splits = target(50);
  const auto& tr = splits.train();
  const auto rows = range(0, 32);
  const Tensor x = tr.batch(rows);
  nn::Labels labels(rows.size());
  nn::Mask mask(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    labels[i] = tr.labels[i];
    mask[i] = labels[i] != nn::kUnlabeled;
  }
  nn::Network teacher = src;
  teacher.set_mode(nn::Mode::eval);
  nn::Network student = src;
  student.set_mode(nn::Mode::train);
  for (auto& p : student.parameters())
    for (double& v : p.data()) v *= 1.05;  // student away from the teacher

  const Tensor probs = nn::softmax(teacher.forward(x));
  auto loss_at = [&](nn::Network s, const Tensor& tp) {
    return nn::total_loss(tp, s.forward(x), labels, mask, 1.0).l_total;
  };
  nn::Network probe = student;
  const Tensor logits = probe.forward(x);
  const auto grads = probe.backward(nn::total_loss_grad(probs, logits, labels, mask, 1.0));

  // analytic student gradient == finite differences with the teacher held fixed
  const double eps = 1e-6;
  for (std::size_t p : {0ul, 4ul, 6ul, 8ul}) {
    for (std::size_t j = 0; j < std::min<std::size_t>(student.parameters()[p].size(), 8); ++j) {
      nn::Network up = student, dn = student;
      up.parameters()[p][j] += eps;
      dn.parameters()[p][j] -= eps;
      const double numeric = (loss_at(up, probs) - loss_at(dn, probs)) / (2 * eps);
      CHECK(std::abs(numeric - grads.params[p][j]) <= 1e-6 * std::max(1.0, std::abs(numeric)));
    }
  }

  // perturbing the teacher changes the consistency value...
  nn::Network shifted = teacher;
  shifted.parameters()[8][0] += 0.5;
  const Tensor probs2 = nn::softmax(shifted.forward(x));
  CHECK(loss_at(student, probs2) != loss_at(student, probs));
  // ...while the backward pass only yields student-shaped gradients and never touches the teacher
  CHECK(grads.params.size() == student.parameters().size());
  const auto teacher_params = teacher.parameters();
  optim::AdamState adam(student.parameters(), {});
  optim::adam_step(student, grads.params, adam);
  CHECK(teacher.parameters() == teacher_params);
}

TEST_CASE("with lambda = 0 and p = 100 the labels do not matter") {
  AdaptConfig cfg = quick(100);
  cfg.lambda = 0.0;
  const auto a = target(100);
  auto relabelled = a.train();
  for (int& l : relabelled.labels) l = (l + 1) % 3;
  const TargetSplits b(relabelled, a.val(), a.test());
  const auto ra = adapt_target(source_model(), a, cfg);
  const auto rb = adapt_target(source_model(), b, cfg);
  CHECK(ra.student.parameters() == rb.student.parameters());
  CHECK(ra.teacher.parameters() == rb.teacher.parameters());
}

TEST_CASE("adaptation is deterministic and recovers shifted targets") {
  AdaptConfig cfg = quick(50);
  cfg.epochs = 30;
  cfg.lr = 5e-3;
  const auto a = adapt_target(source_model(), target(50), cfg);
  const auto b = adapt_target(source_model(), target(50), cfg);
  CHECK(a.teacher.parameters() == b.teacher.parameters());
  CHECK(a.report.teacher.accuracy >= a.report.no_adapt.accuracy);
  CHECK(a.report.teacher.accuracy > 0.9);
}

TEST_CASE("early stop tracks labelled val accuracy only when p >= 10") {
  AdaptConfig cfg = quick(20);
  cfg.epochs = 40;
  cfg.early_stop = true;
  cfg.patience = 2;
  const auto r = adapt_target(source_model(), target(20), cfg);
  CHECK(r.report.epochs.size() < 40);
  CHECK(r.report.epochs.front().val_accuracy > 0.0);

  AdaptConfig blind = quick(5);
  blind.early_stop = true;
  const auto r0 = adapt_target(source_model(), target(5), blind);
  CHECK(r0.report.epochs.size() == 3);
  CHECK(r0.report.epochs.front().val_accuracy == 0.0);
}

TEST_CASE("adaptation rejects a mismatched source model") {
  nn::Network wide(nn::default_architecture({.n_features = 7, .n_classes = 3}));
  CHECK_THROWS_AS(adapt_target(wide, target(20), quick(20)), ShapeError);
}
