#include "solarda/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "solarda/errors.hpp"
#include "solarda/optim.hpp"
#include "solarda/random.hpp"

namespace solarda::adapt {

namespace {

constexpr std::uint64_t kBatchTag = 0x62617463;

std::vector<std::size_t> permuted(std::span<const std::size_t> pool, std::uint64_t seed) {
  std::vector<std::size_t> out(pool.begin(), pool.end());
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::size_t labeled_per_batch(std::size_t n_labeled, std::size_t batch, double ratio) {
  if (n_labeled == 0) return 0;
  auto k = std::size_t(std::llround(ratio * double(batch)));
  if (ratio > 0.0) k = std::max<std::size_t>(k, 1);
  return std::min({k, n_labeled, batch});
}

// Cyclic window of a per-epoch permutation.
void take_cyclic(const std::vector<std::size_t>& perm, std::size_t start, std::size_t count,
                 std::vector<std::size_t>& out) {
  for (std::size_t i = 0; i < count; ++i) out.push_back(perm[(start + i) % perm.size()]);
}

}  // namespace

void AdaptConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("p must lie in [0, 100]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (labeled_fraction_per_batch && !(*labeled_fraction_per_batch >= 0.0 && *labeled_fraction_per_batch <= 1.0)) {
    throw ConfigError("labeled_fraction_per_batch must lie in [0, 1]");
  }
}

TargetSplits::TargetSplits(data::Dataset train, data::Dataset val, data::Dataset test)
    : train_(std::move(train)), val_(std::move(val)), test_(std::move(test)) {
  for (const auto* ds : {&train_, &val_, &test_}) {
    if (ds->domain != data::Domain::target) {
      throw ContractError("source-free adaptation accepts target-domain data only");
    }
  }
  if (!train_.annotation_applied) {
    throw DataError("target train split has no annotation mask; apply annotate_fraction first");
  }
  if (train_.size() == 0) throw DataError("target train split is empty");
}

std::size_t steps_per_epoch(std::size_t n, const AdaptConfig& cfg) {
  std::size_t steps = (n + cfg.batch_size - 1) / cfg.batch_size;
  if (steps > 1 && n % cfg.batch_size == 1) --steps;  // singleton tail joins the previous batch
  return steps;
}

Batch compose_batch(std::span<const std::size_t> labeled_pool, std::span<const std::size_t> unlabeled_pool,
                    const AdaptConfig& cfg, std::size_t epoch, std::size_t step) {
  const std::size_t n = labeled_pool.size() + unlabeled_pool.size();
  if (n == 0) throw DataError("compose_batch: both pools are empty");
  Batch batch;
  const std::size_t steps = steps_per_epoch(n, cfg);
  if (step >= steps) throw std::out_of_range("compose_batch: step beyond the epoch");

  if (!cfg.labeled_fraction_per_batch) {
    std::vector<std::size_t> all(labeled_pool.begin(), labeled_pool.end());
    all.insert(all.end(), unlabeled_pool.begin(), unlabeled_pool.end());
    const auto perm = permuted(all, derive_seed(cfg.seed, {kBatchTag, epoch}));
    const std::size_t b = step * cfg.batch_size;
    const std::size_t e = step + 1 == steps ? n : std::min(n, b + cfg.batch_size);
    batch.indices.assign(perm.begin() + std::ptrdiff_t(b), perm.begin() + std::ptrdiff_t(e));
    std::vector<std::size_t> sorted_labeled(labeled_pool.begin(), labeled_pool.end());
    std::sort(sorted_labeled.begin(), sorted_labeled.end());
    for (std::size_t i : batch.indices) {
      batch.n_labeled += std::binary_search(sorted_labeled.begin(), sorted_labeled.end(), i);
    }
    return batch;
  }

  const std::size_t size = std::min(cfg.batch_size, n);
  std::size_t k = labeled_per_batch(labeled_pool.size(), size, *cfg.labeled_fraction_per_batch);
  if (unlabeled_pool.empty()) k = size;
  const std::size_t u = size - k;
  if (k > 0) {
    const auto perm = permuted(labeled_pool, derive_seed(cfg.seed, {kBatchTag, epoch, 1}));
    take_cyclic(perm, step * k, k, batch.indices);
  }
  if (u > 0) {
    const auto perm = permuted(unlabeled_pool, derive_seed(cfg.seed, {kBatchTag, epoch, 2}));
    take_cyclic(perm, step * u, u, batch.indices);
  }
  batch.n_labeled = k;
  return batch;
}

AdaptResult adapt_target(const nn::Network& theta_s, const TargetSplits& target, const AdaptConfig& cfg,
                         const StepObserver& observer) {
  cfg.validate();
  const optim::EmaConfig ema{cfg.alpha, cfg.teacher_bn};
  ema.validate();
  theta_s.require_classifier_head();
  const auto& train = target.train();
  if (train.width() != theta_s.input_width()) {
    throw ShapeError("source model expects " + std::to_string(theta_s.input_width()) +
                     " features, target data has " + std::to_string(train.width()));
  }

  AdaptResult result{theta_s, theta_s, {}};
  nn::Network& teacher = result.teacher;
  nn::Network& student = result.student;
  AdaptReport& report = result.report;
  teacher.set_mode(nn::Mode::eval);
  optim::AdamState adam(student.parameters(), optim::AdamHyper{.lr = cfg.lr});

  std::vector<std::size_t> labeled, unlabeled;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (train.labels[i] == nn::kUnlabeled ? unlabeled : labeled).push_back(i);
  }
  const bool track_val = cfg.early_stop && cfg.p >= 10.0 && target.val().n_labeled() > 0;
  data::Dataset val_labeled;
  if (track_val) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < target.val().size(); ++i) {
      if (target.val().labels[i] != nn::kUnlabeled) rows.push_back(i);
    }
    val_labeled = target.val().subset(rows);
  }
  nn::Network best_teacher;
  double best_val = -1.0;
  std::size_t since_best = 0;

  nn::Network teacher_before;
  nn::Labels labels;
  nn::Mask mask;
  const std::size_t steps = steps_per_epoch(train.size(), cfg);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLoss agg{.epoch = epoch};
    for (std::size_t step = 0; step < steps; ++step) {
      const Batch batch = compose_batch(labeled, unlabeled, cfg, epoch, step);
      if (train.domain == data::Domain::source) report.source_samples_read += batch.indices.size();
      report.target_samples_read += batch.indices.size();
      const Tensor x = train.batch(batch.indices);
      labels.resize(batch.indices.size());
      mask.resize(batch.indices.size());
      for (std::size_t i = 0; i < batch.indices.size(); ++i) {
        labels[i] = train.labels[batch.indices[i]];
        mask[i] = labels[i] != nn::kUnlabeled;
      }

      const Tensor teacher_probs = nn::softmax(teacher.forward(x), cfg.temperature);
      student.set_mode(nn::Mode::train);
      const Tensor student_logits = student.forward(x);
      const nn::LossReport loss = nn::total_loss(teacher_probs, student_logits, labels, mask, cfg.lambda);
      if (!std::isfinite(loss.l_total)) {
        throw NumericError("non-finite adaptation loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      }
      const auto grads =
          student.backward(nn::total_loss_grad(teacher_probs, student_logits, labels, mask, cfg.lambda));
      optim::adam_step(student, grads.params, adam);
      if (observer) teacher_before = teacher;
      optim::ema_update(teacher, student, ema);

      report.steps.push_back(loss);
      agg.l_cons += loss.l_cons;
      agg.l_ce += loss.l_ce;
      agg.l_total += loss.l_total;
      if (observer) observer(StepInfo{epoch, step, loss, student, teacher_before, teacher});
    }
    agg.l_cons /= double(steps);
    agg.l_ce /= double(steps);
    agg.l_total /= double(steps);
    if (track_val) {
      agg.val_accuracy = train::evaluate(teacher, val_labeled).accuracy;
      if (agg.val_accuracy > best_val) {
        best_val = agg.val_accuracy;
        best_teacher = teacher;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    report.epochs.push_back(agg);
    if (track_val && since_best >= cfg.patience) break;
  }
  if (track_val) teacher = best_teacher;

  report.teacher = train::evaluate(teacher, target.test());
  report.student = train::evaluate(student, target.test());
  report.no_adapt = train::evaluate(theta_s, target.test());
  report.delta = report.teacher.accuracy - report.no_adapt.accuracy;
  return result;
}

}  // namespace solarda::adapt
