#include "solarda/network.hpp"

#include <cmath>
#include <random>

#include "solarda/errors.hpp"

namespace solarda::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Shape infer_output(const LayerSpec& spec, const Shape& in, std::size_t index) {
  const std::string where = "layer " + std::to_string(index) + " (" + layer_kind(spec) + "): ";
  return std::visit(
      Overloaded{
          [&](const Conv1DSpec& s) -> Shape {
            if (in.size() != 2 || in[0] != s.in_channels) {
              throw ShapeError(where + "expects [" + std::to_string(s.in_channels) + ", L] input, got " +
                               shape_string(in));
            }
            if (s.kernel == 0 || in[1] + 2 * s.padding < s.kernel) {
              throw ShapeError(where + "kernel wider than padded input");
            }
            return {s.out_channels, in[1] + 2 * s.padding - s.kernel + 1};
          },
          [&](const BatchNorm1DSpec& s) -> Shape {
            if (in.empty() || in.size() > 2 || in[0] != s.channels) {
              throw ShapeError(where + "expects " + std::to_string(s.channels) + " channels, got " +
                               shape_string(in));
            }
            return in;
          },
          [&](const ReLUSpec&) -> Shape { return in; },
          [&](const FlattenSpec&) -> Shape { return {shape_product(in)}; },
          [&](const DenseSpec& s) -> Shape {
            if (in.size() != 1 || in[0] != s.in_features) {
              throw ShapeError(where + "expects [" + std::to_string(s.in_features) + "] input, got " +
                               shape_string(in));
            }
            return {s.out_features};
          },
      },
      spec);
}

std::size_t channel_length(const Shape& per_sample) { return per_sample.size() == 2 ? per_sample[1] : 1; }

}  // namespace

std::string layer_kind(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const Conv1DSpec&) { return std::string("conv1d"); },
                        [](const BatchNorm1DSpec&) { return std::string("batchnorm1d"); },
                        [](const ReLUSpec&) { return std::string("relu"); },
                        [](const DenseSpec&) { return std::string("dense"); },
                        [](const FlattenSpec&) { return std::string("flatten"); },
                    },
                    spec);
}

Architecture default_architecture(const ArchitectureOptions& o) {
  const std::size_t flat = o.conv2_channels * (o.n_features + 2 * (o.kernel / 2) - o.kernel + 1);
  Architecture arch;
  arch.input_shape = {1, o.n_features};
  arch.layers = {
      Conv1DSpec{1, o.conv1_channels, o.kernel, o.kernel / 2, false},
      BatchNorm1DSpec{o.conv1_channels},
      ReLUSpec{},
      Conv1DSpec{o.conv1_channels, o.conv2_channels, o.kernel, o.kernel / 2, false},
      BatchNorm1DSpec{o.conv2_channels},
      ReLUSpec{},
      FlattenSpec{},
      DenseSpec{flat, o.hidden},
      ReLUSpec{},
      DenseSpec{o.hidden, o.n_classes},
  };
  return arch;
}

Network::Network(Architecture arch) : arch_(std::move(arch)) {
  if (arch_.input_shape.empty() || shape_product(arch_.input_shape) == 0) {
    throw ShapeError("network input shape must be non-empty");
  }
  shapes_.push_back(arch_.input_shape);
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const LayerSpec& spec = arch_.layers[i];
    const Shape& in = shapes_.back();
    Slot slot{params_.size(), 0, running_.size()};
    const std::string prefix = "layer" + std::to_string(i) + "." + layer_kind(spec) + ".";
    auto add_param = [&](const std::string& name, Shape shape) {
      params_.emplace_back(std::move(shape));
      param_names_.push_back(prefix + name);
      ++slot.param_count;
    };
    if (const auto* c = std::get_if<Conv1DSpec>(&spec)) {
      (void)infer_output(spec, in, i);
      add_param("weight", {c->in_channels, c->kernel, c->out_channels});
      if (c->bias) add_param("bias", {c->out_channels});
    } else if (const auto* b = std::get_if<BatchNorm1DSpec>(&spec)) {
      (void)infer_output(spec, in, i);
      add_param("gamma", {b->channels});
      params_.back().fill(1.0);
      add_param("beta", {b->channels});
      running_.emplace_back(Shape{b->channels}, 0.0);
      running_names_.push_back(prefix + "running_mean");
      running_.emplace_back(Shape{b->channels}, 1.0);
      running_names_.push_back(prefix + "running_var");
    } else if (const auto* d = std::get_if<DenseSpec>(&spec)) {
      (void)infer_output(spec, in, i);
      add_param("weight", {d->in_features, d->out_features});
      add_param("bias", {d->out_features});
    }
    slots_.push_back(slot);
    shapes_.push_back(infer_output(spec, in, i));
  }
  caches_.resize(arch_.layers.size());
}

void Network::require_classifier_head() const {
  if (arch_.layers.empty() || !std::holds_alternative<DenseSpec>(arch_.layers.back())) {
    throw ShapeError("classifier network must end in a Dense layer");
  }
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void Network::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const Slot& slot = slots_[i];
    const LayerSpec& spec = arch_.layers[i];
    auto uniform_fill = [&](Tensor& t, double fan_in, double fan_out) {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : t.data()) v = dist(rng);
    };
    if (const auto* c = std::get_if<Conv1DSpec>(&spec)) {
      uniform_fill(params_[slot.param_offset], double(c->in_channels * c->kernel),
                   double(c->out_channels * c->kernel));
      if (c->bias) params_[slot.param_offset + 1].fill(0.0);
    } else if (const auto* d = std::get_if<DenseSpec>(&spec)) {
      uniform_fill(params_[slot.param_offset], double(d->in_features), double(d->out_features));
      params_[slot.param_offset + 1].fill(0.0);
    } else if (std::holds_alternative<BatchNorm1DSpec>(spec)) {
      params_[slot.param_offset].fill(1.0);
      params_[slot.param_offset + 1].fill(0.0);
      running_[slot.stat_offset].fill(0.0);
      running_[slot.stat_offset + 1].fill(1.0);
    }
  }
  has_cache_ = false;
}

Tensor Network::forward(const Tensor& batch) {
  if (batch.rank() < 2) {
    throw ShapeError("forward expects a batch tensor of rank >= 2, got " + shape_string(batch.shape()));
  }
  const std::size_t b = batch.dim(0);
  if (b == 0) throw ShapeError("forward called with an empty batch");
  const std::size_t width = batch.size() / b;
  if (width != input_width()) {
    throw ShapeError("batch width " + std::to_string(width) + " does not match network input width " +
                     std::to_string(input_width()) + " " + shape_string(arch_.input_shape));
  }
  if (mode_ == Mode::train && b < 2 && has_batchnorm()) {
    throw ShapeError("degenerate batch: batch size 1 in train mode with BatchNorm");
  }
  Shape full{b};
  full.insert(full.end(), arch_.input_shape.begin(), arch_.input_shape.end());
  Tensor x = batch.reshaped(full);
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) x = forward_layer(i, x);
  cached_batch_ = b;
  has_cache_ = true;
  return x.reshaped({b, output_width()});
}

Tensor Network::forward_layer(std::size_t i, const Tensor& x) {
  const LayerSpec& spec = arch_.layers[i];
  const Slot& slot = slots_[i];
  Cache& cache = caches_[i];
  cache.mode = mode_;
  const std::size_t batch = x.dim(0);
  const Shape& in = shapes_[i];
  const Shape& out = shapes_[i + 1];
  Shape out_full{batch};
  out_full.insert(out_full.end(), out.begin(), out.end());

  if (const auto* c = std::get_if<Conv1DSpec>(&spec)) {
    const std::size_t len = in[1];
    const std::size_t lout = out[1];
    const std::size_t ck = c->in_channels * c->kernel;
    const std::size_t rows = batch * lout;
    Tensor col({rows, ck});
    const double* xs = x.raw();
    double* cs = col.raw();
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t t = 0; t < lout; ++t) {
        double* crow = cs + (bi * lout + t) * ck;
        for (std::size_t ci = 0; ci < c->in_channels; ++ci) {
          const double* xrow = xs + (bi * c->in_channels + ci) * len;
          for (std::size_t k = 0; k < c->kernel; ++k) {
            const std::ptrdiff_t pos = std::ptrdiff_t(t + k) - std::ptrdiff_t(c->padding);
            crow[ci * c->kernel + k] = (pos >= 0 && pos < std::ptrdiff_t(len)) ? xrow[pos] : 0.0;
          }
        }
      }
    }
    std::vector<double> y2(rows * c->out_channels, 0.0);
    gemm_nn(rows, c->out_channels, ck, col.raw(), params_[slot.param_offset].raw(), y2.data());
    Tensor y(out_full);
    double* ys = y.raw();
    const double* bias = c->bias ? params_[slot.param_offset + 1].raw() : nullptr;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t t = 0; t < lout; ++t) {
        const double* src = y2.data() + (bi * lout + t) * c->out_channels;
        for (std::size_t co = 0; co < c->out_channels; ++co) {
          ys[(bi * c->out_channels + co) * lout + t] = src[co] + (bias ? bias[co] : 0.0);
        }
      }
    }
    cache.input = std::move(col);
    return y;
  }

  if (const auto* bn = std::get_if<BatchNorm1DSpec>(&spec)) {
    const std::size_t ch = bn->channels;
    const std::size_t len = channel_length(in);
    const std::size_t m = batch * len;
    const double* gamma = params_[slot.param_offset].raw();
    const double* beta = params_[slot.param_offset + 1].raw();
    double* rmean = running_[slot.stat_offset].raw();
    double* rvar = running_[slot.stat_offset + 1].raw();
    Tensor y(out_full);
    Tensor normed(out_full);
    cache.inv_std.assign(ch, 0.0);
    const double* xs = x.raw();
    for (std::size_t c = 0; c < ch; ++c) {
      double mean;
      double var;
      if (mode_ == Mode::train) {
        double sum = 0.0;
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const double* row = xs + (bi * ch + c) * len;
          for (std::size_t t = 0; t < len; ++t) sum += row[t];
        }
        mean = sum / double(m);
        double sq = 0.0;
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const double* row = xs + (bi * ch + c) * len;
          for (std::size_t t = 0; t < len; ++t) sq += (row[t] - mean) * (row[t] - mean);
        }
        var = sq / double(m);
        rmean[c] = (1.0 - bn->momentum) * rmean[c] + bn->momentum * mean;
        rvar[c] = (1.0 - bn->momentum) * rvar[c] + bn->momentum * var * double(m) / double(m - 1);
      } else {
        mean = rmean[c];
        var = rvar[c];
      }
      const double inv = 1.0 / std::sqrt(var + bn->eps);
      cache.inv_std[c] = inv;
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const std::size_t off = (bi * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) {
          const double xh = (xs[off + t] - mean) * inv;
          normed[off + t] = xh;
          y[off + t] = gamma[c] * xh + beta[c];
        }
      }
    }
    cache.normed = std::move(normed);
    return y;
  }

  if (std::holds_alternative<ReLUSpec>(spec)) {
    Tensor y = x;
    for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
    cache.input = x;
    return y;
  }

  if (std::holds_alternative<FlattenSpec>(spec)) return x.reshaped(out_full);

  const auto& d = std::get<DenseSpec>(spec);
  Tensor y(out_full);
  const double* bias = params_[slot.param_offset + 1].raw();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    double* row = y.raw() + bi * d.out_features;
    for (std::size_t o = 0; o < d.out_features; ++o) row[o] = bias[o];
  }
  gemm_nn(batch, d.out_features, d.in_features, x.raw(), params_[slot.param_offset].raw(), y.raw());
  cache.input = x;
  return y;
}

Gradients Network::backward(const Tensor& output_grad) const {
  if (!has_cache_) throw StateError("backward called without a preceding forward pass");
  if (output_grad.size() != cached_batch_ * output_width()) {
    throw ShapeError("upstream gradient " + shape_string(output_grad.shape()) + " does not match forward output [" +
                     std::to_string(cached_batch_) + "x" + std::to_string(output_width()) + "]");
  }
  Gradients g;
  g.params.reserve(params_.size());
  for (const auto& p : params_) g.params.push_back(Tensor::zeros_like(p));
  Shape full{cached_batch_};
  full.insert(full.end(), shapes_.back().begin(), shapes_.back().end());
  Tensor dy = output_grad.reshaped(full);
  for (std::size_t i = arch_.layers.size(); i-- > 0;) dy = backward_layer(i, dy, g.params);
  g.input = std::move(dy);
  return g;
}

Tensor Network::backward_layer(std::size_t i, const Tensor& dy, std::vector<Tensor>& grads) const {
  const LayerSpec& spec = arch_.layers[i];
  const Slot& slot = slots_[i];
  const Cache& cache = caches_[i];
  const std::size_t batch = cached_batch_;
  const Shape& in = shapes_[i];
  const Shape& out = shapes_[i + 1];
  Shape in_full{batch};
  in_full.insert(in_full.end(), in.begin(), in.end());

  if (const auto* c = std::get_if<Conv1DSpec>(&spec)) {
    const std::size_t len = in[1];
    const std::size_t lout = out[1];
    const std::size_t ck = c->in_channels * c->kernel;
    const std::size_t rows = batch * lout;
    std::vector<double> dy2(rows * c->out_channels);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t co = 0; co < c->out_channels; ++co) {
        const double* src = dy.raw() + (bi * c->out_channels + co) * lout;
        for (std::size_t t = 0; t < lout; ++t) dy2[(bi * lout + t) * c->out_channels + co] = src[t];
      }
    }
    gemm_tn(ck, c->out_channels, rows, cache.input.raw(), dy2.data(), grads[slot.param_offset].raw());
    if (c->bias) {
      double* db = grads[slot.param_offset + 1].raw();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t co = 0; co < c->out_channels; ++co) db[co] += dy2[r * c->out_channels + co];
      }
    }
    std::vector<double> dcol(rows * ck, 0.0);
    gemm_nt(rows, ck, c->out_channels, dy2.data(), params_[slot.param_offset].raw(), dcol.data());
    Tensor dx(in_full);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t t = 0; t < lout; ++t) {
        const double* crow = dcol.data() + (bi * lout + t) * ck;
        for (std::size_t ci = 0; ci < c->in_channels; ++ci) {
          double* xrow = dx.raw() + (bi * c->in_channels + ci) * len;
          for (std::size_t k = 0; k < c->kernel; ++k) {
            const std::ptrdiff_t pos = std::ptrdiff_t(t + k) - std::ptrdiff_t(c->padding);
            if (pos >= 0 && pos < std::ptrdiff_t(len)) xrow[pos] += crow[ci * c->kernel + k];
          }
        }
      }
    }
    return dx;
  }

  if (const auto* bn = std::get_if<BatchNorm1DSpec>(&spec)) {
    const std::size_t ch = bn->channels;
    const std::size_t len = channel_length(in);
    const double m = double(batch * len);
    const double* gamma = params_[slot.param_offset].raw();
    double* dgamma = grads[slot.param_offset].raw();
    double* dbeta = grads[slot.param_offset + 1].raw();
    Tensor dx(in_full);
    for (std::size_t c = 0; c < ch; ++c) {
      double sum_dy = 0.0;
      double sum_dy_xh = 0.0;
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const std::size_t off = (bi * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) {
          sum_dy += dy[off + t];
          sum_dy_xh += dy[off + t] * cache.normed[off + t];
        }
      }
      dgamma[c] += sum_dy_xh;
      dbeta[c] += sum_dy;
      const double scale = gamma[c] * cache.inv_std[c];
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const std::size_t off = (bi * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) {
          if (cache.mode == Mode::train) {
            dx[off + t] = scale / m * (m * dy[off + t] - sum_dy - cache.normed[off + t] * sum_dy_xh);
          } else {
            dx[off + t] = scale * dy[off + t];
          }
        }
      }
    }
    return dx;
  }

  if (std::holds_alternative<ReLUSpec>(spec)) {
    Tensor dx(in_full);
    for (std::size_t k = 0; k < dx.size(); ++k) dx[k] = cache.input[k] > 0.0 ? dy[k] : 0.0;
    return dx;
  }

  if (std::holds_alternative<FlattenSpec>(spec)) return dy.reshaped(in_full);

  const auto& d = std::get<DenseSpec>(spec);
  gemm_tn(d.in_features, d.out_features, batch, cache.input.raw(), dy.raw(), grads[slot.param_offset].raw());
  double* db = grads[slot.param_offset + 1].raw();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t o = 0; o < d.out_features; ++o) db[o] += dy[bi * d.out_features + o];
  }
  Tensor dx(in_full);
  gemm_nt(batch, d.in_features, d.out_features, dy.raw(), params_[slot.param_offset].raw(), dx.raw());
  return dx;
}

Tensor forward(Network& net, const Tensor& batch) { return net.forward(batch); }

Gradients backward(const Network& net, const Tensor& output_grad) { return net.backward(output_grad); }

}  // namespace solarda::nn
