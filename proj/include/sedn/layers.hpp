#pragma once

// Convolution + batch-norm blocks, spiking units and a flat registry of named
// tensors used by optimizers and checkpoints.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sedn/neuron.hpp"
#include "sedn/ops.hpp"
#include "sedn/profiler.hpp"

SEDN_BEGIN_NAMESPACE

struct NamedTensor {
  std::string name;
  Tensor* tensor;
  bool trainable;
};

using TensorList = std::vector<NamedTensor>;

/// U(-b, b) with b = sqrt(6 / fan_in).
Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng);

struct BatchNormParams {
  Tensor gamma;  // empty when not affine
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);
  bool training = true;
};

/// Returns (w', b') such that conv(x, w') + b' == batch_norm(conv(x, w) + b)
/// with the running statistics. `bias` may be empty. Throws StateError while
/// the normalization is in training mode.
std::pair<Tensor, Tensor> fold_bn_into_conv(const Tensor& weight, const Tensor& bias, const BatchNormParams& bn);

struct ConvSpec {
  std::size_t in = 1;
  std::size_t out = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  bool batch_norm = true;
  bool affine = true;
  bool bias = false;
  /// Inputs are real-valued rather than spikes (only matters for accounting).
  bool real_input = false;
};

/// conv -> (BN) with "same" padding for stride 1 and (k-1)/2*dilation padding
/// otherwise. After fold() the normalization lives in the weights and bias.
class ConvBn {
 public:
  ConvBn() = default;
  ConvBn(std::string name, const ConvSpec& spec, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Profiler* profiler = nullptr) const;
  void set_training(bool on) { bn_.training = on; }
  bool training() const { return bn_.training; }
  void fold();
  bool has_batch_norm() const { return has_bn_; }
  void collect(TensorList& out);

  const std::string& name() const { return name_; }
  const ConvSpec& spec() const { return spec_; }
  Tensor& weight() { return weight_; }
  const Tensor& weight() const { return weight_; }
  Tensor& bias() { return bias_; }
  BatchNormParams& bn() { return bn_; }
  const BatchNormParams& bn() const { return bn_; }
  std::size_t parameter_count() const;

 private:
  std::string name_;
  ConvSpec spec_;
  Tensor weight_;
  Tensor bias_;
  bool has_bn_ = false;
  mutable BatchNormParams bn_;
};

struct ForwardContext {
  SpikeFn spike_fn = SpikeFn::heaviside;
  Profiler* profiler = nullptr;
};

/// conv -> BN -> spiking neuron.
class SpikingConv {
 public:
  SpikingConv() = default;
  SpikingConv(std::string name, const ConvSpec& spec, const NeuronConfig& neuron, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, NeuronState& state, const ForwardContext& ctx) const;

  ConvBn& conv() { return conv_; }
  const ConvBn& conv() const { return conv_; }
  NeuronLayer& neuron() { return neuron_; }
  const NeuronLayer& neuron() const { return neuron_; }
  void collect(TensorList& out);

 private:
  ConvBn conv_;
  NeuronLayer neuron_;
};

/// Spike a precomputed current through `neuron`, updating `state` and the profiler.
Tensor fire(const NeuronLayer& neuron, const Tensor& current, NeuronState& state, const ForwardContext& ctx);

std::size_t count_trainable(const TensorList& list);

SEDN_END_NAMESPACE
