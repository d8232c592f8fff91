#include "solarda/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>

#include "solarda/errors.hpp"
#include "solarda/loss.hpp"
#include "solarda/optim.hpp"
#include "solarda/random.hpp"

namespace solarda::train {

namespace {

constexpr std::size_t kEvalChunk = 4096;
constexpr std::uint64_t kInitTag = 0x696e6974;
constexpr std::uint64_t kShuffleTag = 0x73687566;

void require_width(const nn::Network& model, const data::Dataset& ds) {
  if (ds.width() != model.input_width()) {
    throw ShapeError("model expects " + std::to_string(model.input_width()) + " features, dataset has " +
                     std::to_string(ds.width()));
  }
}

}  // namespace

std::pair<double, double> loss_and_accuracy(const nn::Network& model, const data::Dataset& ds) {
  const Tensor logits = predict_logits(model, ds);
  const nn::Mask mask(ds.size(), true);
  const auto pred = nn::argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hits += pred[i] == ds.labels[i];
  return {nn::cross_entropy_hard(logits, ds.labels, mask), ds.size() ? double(hits) / double(ds.size()) : 0.0};
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
}

std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, {kInitTag}); }
std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t epoch) { return derive_seed(seed, {kShuffleTag, epoch}); }

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    bool merge_singleton) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < n; b += batch_size) {
    batches.emplace_back(order.begin() + std::ptrdiff_t(b), order.begin() + std::ptrdiff_t(std::min(n, b + batch_size)));
  }
  if (merge_singleton && batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

Tensor predict_logits(const nn::Network& model, const data::Dataset& ds) {
  require_width(model, ds);
  nn::Network net = model;
  net.set_mode(nn::Mode::eval);
  const std::size_t c = net.output_width();
  Tensor out({ds.size(), c});
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < ds.size(); b += kEvalChunk) {
    const std::size_t e = std::min(ds.size(), b + kEvalChunk);
    idx.resize(e - b);
    std::iota(idx.begin(), idx.end(), b);
    const Tensor logits = net.forward(ds.batch(idx));
    std::copy(logits.raw(), logits.raw() + logits.size(), out.raw() + b * c);
  }
  return out;
}

std::vector<int> predict(const nn::Network& model, const data::Dataset& ds) {
  if (ds.size() == 0) return {};
  return nn::argmax_rows(predict_logits(model, ds));
}

double mean_loss(const nn::Network& model, const data::Dataset& ds) {
  if (ds.n_labeled() == 0) return 0.0;
  const Tensor logits = predict_logits(model, ds);
  nn::Mask mask(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) mask[i] = ds.labels[i] != nn::kUnlabeled;
  return nn::cross_entropy_hard(logits, ds.labels, mask);
}

EvalReport make_report(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t classes) {
  if (predicted.size() != truth.size()) throw ShapeError("prediction and label counts differ");
  EvalReport r;
  r.n = truth.size();
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || std::size_t(truth[i]) >= classes || predicted[i] < 0 || std::size_t(predicted[i]) >= classes) {
      throw DataError("class id out of range at row " + std::to_string(i));
    }
    ++r.confusion[std::size_t(truth[i])][std::size_t(predicted[i])];
    hits += truth[i] == predicted[i];
  }
  r.accuracy = r.n ? double(hits) / double(r.n) : 0.0;
  r.precision.assign(classes, 0.0);
  r.recall.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t col = 0, row = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      col += r.confusion[k][c];
      row += r.confusion[c][k];
    }
    if (col) r.precision[c] = double(r.confusion[c][c]) / double(col);
    if (row) r.recall[c] = double(r.confusion[c][c]) / double(row);
  }
  return r;
}

EvalReport evaluate(const nn::Network& model, const data::Dataset& split) {
  if (split.size() == 0) throw DataError("cannot evaluate on an empty split");
  if (split.n_labeled() != split.size()) throw DataError("evaluation split has unlabelled rows");
  return make_report(predict(model, split), split.labels, model.output_width());
}

TrainResult train_source(const data::Dataset& train, const data::Dataset& val, const nn::Architecture& arch,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw DataError("training split is empty");
  if (train.n_labeled() != train.size()) throw DataError("source training needs every row labelled");
  if (val.size() != 0 && val.n_labeled() != val.size()) throw DataError("validation split has unlabelled rows");

  nn::Network net(arch);
  net.require_classifier_head();
  require_width(net, train);
  net.init(init_seed(cfg.seed));
  optim::AdamState adam(net.parameters(), optim::AdamHyper{.lr = cfg.lr});

  TrainResult result;
  result.model = net;
  double best = -1.0;
  std::size_t since_best = 0;
  nn::Labels labels;
  const nn::Mask mask(std::min(cfg.batch_size + 1, train.size()), true);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto batches = epoch_batches(train.size(), cfg.batch_size, shuffle_seed(cfg.seed, epoch), net.has_batchnorm());
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      net.set_mode(nn::Mode::train);
      const Tensor logits = net.forward(train.batch(idx));
      labels.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train.labels[idx[i]];
      const nn::Mask m(mask.begin(), mask.begin() + std::ptrdiff_t(idx.size()));
      const double loss = nn::cross_entropy_hard(logits, labels, m);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      const auto grads = net.backward(nn::cross_entropy_hard_grad(logits, labels, m));
      optim::adam_step(net, grads.params, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    std::tie(rec.train_loss, rec.train_accuracy) = loss_and_accuracy(net, train);
    if (val.size()) std::tie(rec.val_loss, rec.val_accuracy) = loss_and_accuracy(net, val);
    result.history.push_back(rec);
    const double score = val.size() ? rec.val_accuracy : rec.train_accuracy;
    if (score > best) {
      best = score;
      since_best = 0;
      result.model = net;
      result.best_epoch = epoch;
      result.best_val_accuracy = score;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.model.set_mode(nn::Mode::eval);
  return result;
}

}  // namespace solarda::train
