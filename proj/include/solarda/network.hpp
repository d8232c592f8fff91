#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "solarda/tensor.hpp"

namespace solarda::nn {

// Per-sample activations are either [channels, length] (convolutional stages)
// or [features] (after Flatten / for Dense stacks). Batches prepend B.

/// 1-D convolution, stride 1. Weight is stored [in_channels, kernel, out_channels].
struct Conv1DSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  bool bias = true;
  friend bool operator==(const Conv1DSpec&, const Conv1DSpec&) = default;
};

/// Per-channel batch normalisation over (batch, length).
struct BatchNorm1DSpec {
  std::size_t channels = 1;
  double momentum = 0.1;
  double eps = 1e-5;
  friend bool operator==(const BatchNorm1DSpec&, const BatchNorm1DSpec&) = default;
};

struct ReLUSpec {
  friend bool operator==(const ReLUSpec&, const ReLUSpec&) = default;
};

struct FlattenSpec {
  friend bool operator==(const FlattenSpec&, const FlattenSpec&) = default;
};

/// Fully connected layer y = x W + b, with W stored [in_features, out_features].
struct DenseSpec {
  std::size_t in_features = 1;
  std::size_t out_features = 1;
  friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

using LayerSpec = std::variant<Conv1DSpec, BatchNorm1DSpec, ReLUSpec, DenseSpec, FlattenSpec>;

std::string layer_kind(const LayerSpec& spec);

enum class Mode { train, eval };

struct ArchitectureOptions {
  std::size_t n_features = 6;
  std::size_t n_classes = 5;
  std::size_t conv1_channels = 16;
  std::size_t conv2_channels = 32;
  std::size_t kernel = 3;
  std::size_t hidden = 64;
};

/// Conv(1->16) BN ReLU Conv(16->32) BN ReLU Flatten Dense(->64) ReLU Dense(->C).
/// Conv layers carry no bias because the following BatchNorm cancels it.
struct Architecture {
  Shape input_shape;  // per sample, e.g. {1, 6}
  std::vector<LayerSpec> layers;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

Architecture default_architecture(const ArchitectureOptions& opts = {});

/// Gradients aligned with Network::parameters(), plus dL/d(input).
struct Gradients {
  std::vector<Tensor> params;
  Tensor input;
};

class Network {
 public:
  Network() = default;
  /// Validates that consecutive layer shapes compose. Parameters start at
  /// zero; call init() for random weights.
  explicit Network(Architecture arch);

  /// Fan-in/fan-out scaled uniform weights, zero biases, BN gamma=1 beta=0.
  void init(std::uint64_t seed);

  /// batch is [B, F] or [B, input_shape...]; returns [B, outputs].
  Tensor forward(const Tensor& batch);
  /// Requires a preceding forward(); leaves parameters untouched.
  Gradients backward(const Tensor& output_grad) const;

  void set_mode(Mode mode) noexcept { mode_ = mode; }
  Mode mode() const noexcept { return mode_; }

  const Architecture& architecture() const noexcept { return arch_; }
  std::size_t input_width() const noexcept { return shape_product(arch_.input_shape); }
  std::size_t output_width() const noexcept { return shape_product(shapes_.back()); }
  /// Throws ShapeError unless the last layer is Dense.
  void require_classifier_head() const;

  std::vector<Tensor>& parameters() noexcept { return params_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  const std::vector<std::string>& parameter_names() const noexcept { return param_names_; }
  std::size_t parameter_count() const noexcept;

  /// BN running mean/variance tensors, two per BatchNorm layer.
  std::vector<Tensor>& running_stats() noexcept { return running_; }
  const std::vector<Tensor>& running_stats() const noexcept { return running_; }
  const std::vector<std::string>& running_stat_names() const noexcept { return running_names_; }

  bool has_batchnorm() const noexcept { return !running_.empty(); }

 private:
  struct Slot {
    std::size_t param_offset = 0;
    std::size_t param_count = 0;
    std::size_t stat_offset = 0;
  };
  struct Cache {
    Tensor input;   // layer input (or im2col buffer for conv)
    Tensor normed;  // BN x-hat
    std::vector<double> inv_std;
    Mode mode = Mode::train;
  };

  Tensor forward_layer(std::size_t i, const Tensor& x);
  Tensor backward_layer(std::size_t i, const Tensor& dy, std::vector<Tensor>& grads) const;

  Architecture arch_;
  std::vector<Shape> shapes_;  // shapes_[i] = per-sample input shape of layer i; back() = output
  std::vector<Slot> slots_;
  std::vector<Tensor> params_;
  std::vector<std::string> param_names_;
  std::vector<Tensor> running_;
  std::vector<std::string> running_names_;
  Mode mode_ = Mode::train;
  std::vector<Cache> caches_;
  std::size_t cached_batch_ = 0;
  bool has_cache_ = false;
};

Tensor forward(Network& net, const Tensor& batch);
Gradients backward(const Network& net, const Tensor& output_grad);

}  // namespace solarda::nn
