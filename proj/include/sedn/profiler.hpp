#pragma once

// Instrumentation hooks filled in by the network's forward pass: synaptic
// work per layer, elementwise multiplications and per-neuron spike counts.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sedn/tensor.hpp"

SEDN_BEGIN_NAMESPACE

struct SynapticRecord {
  /// ANN-equivalent multiply-accumulates for one sample at one step.
  std::uint64_t macs_per_step = 0;
  /// Inputs are real-valued (event counts, images, pooled features), so every
  /// accumulate is a multiplication.
  bool real_input = false;
  /// Sum over recorded calls of the fraction of nonzero inputs, per sample.
  double active_fraction_sum = 0;
  /// Number of (sample, step) pairs recorded.
  std::uint64_t sample_steps = 0;
  /// A spiking-layer input held a value outside {0,1}.
  bool nonbinary_input = false;
  std::size_t order = 0;
};

struct SpikeRecord {
  std::vector<double> per_neuron;  // spike counts per neuron (C*H*W)
  std::uint64_t sample_steps = 0;
  std::size_t order = 0;
};

class Profiler {
 public:
  /// A layer whose output is a weighted sum of `input` with `macs_per_step`
  /// multiply-accumulates per sample per step.
  void synaptic(std::string_view layer, const Tensor& input, std::uint64_t macs_per_step, bool real_input);
  /// Convolution shorthand: macs = k*k*Hout*Wout*Cin*Cout.
  void conv(std::string_view layer, const Tensor& input, std::size_t kernel, const Shape& output_shape,
            bool real_input);
  /// Elementwise multiplications actually executed (BN scaling, gains, interpolation).
  void multiplications(std::string_view layer, std::uint64_t count);
  void spikes(std::string_view layer, const Tensor& output);

  const std::map<std::string, SynapticRecord, std::less<>>& synaptic_records() const { return synaptic_; }
  const std::map<std::string, std::uint64_t, std::less<>>& multiplication_records() const { return mults_; }
  const std::map<std::string, SpikeRecord, std::less<>>& spike_records() const { return spikes_; }
  /// Layer names in first-seen order.
  std::vector<std::string> synaptic_order() const;
  std::vector<std::string> spike_order() const;
  void clear();

 private:
  std::map<std::string, SynapticRecord, std::less<>> synaptic_;
  std::map<std::string, std::uint64_t, std::less<>> mults_;
  std::map<std::string, SpikeRecord, std::less<>> spikes_;
};

SEDN_END_NAMESPACE
