#pragma once

// Iterative LIF / adaptive-threshold LIF (AiLIF) neurons with hard reset and a
// triangular surrogate gradient.

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sedn/simd.hpp"
#include "sedn/tensor.hpp"

SEDN_BEGIN_NAMESPACE

using simd::SpikeFn;

/// Triangular surrogate: d/dv H(v) ~ max(0, w - |v|) / w^2 (unit mass).
struct SurrogateSpec {
  std::string family = "triangle";
  Real temperature = 1;

  Real derivative(Real v) const;
};

struct NeuronConfig {
  Real u_th = Real(0.5);
  Real tau = Real(0.2);
  bool adaptive = false;
  Real beta = 0;
  Real tau_a = Real(0.3);
  Real tau_a_min = Real(0.2);
  Real tau_a_max = Real(0.4);
  bool train_tau_a = true;
  SurrogateSpec surrogate;

  static NeuronConfig lif(Real u_th);
  static NeuronConfig ailif(Real u_th, Real beta, Real tau_a);
  /// Throws DomainError for tau, tau_a outside (0,1), beta < 0 or a bad clamp range.
  void validate() const;
};

struct ThresholdBound {
  double lo;
  double hi;
};

/// [u_th, u_th + beta/(1 - tau_a)]; DomainError unless 0 < tau_a < 1.
ThresholdBound adaptation_bound(double u_th, double beta, double tau_a);
ThresholdBound adaptation_bound(const NeuronConfig& cfg);

/// Membrane potential, adaptation accumulator and last output of one layer.
/// An empty state means "at rest" (all zeros).
struct NeuronState {
  Tensor u;
  Tensor a;
  Tensor y;

  bool empty() const { return !u.defined(); }
  static NeuronState rest(const Shape& shape);
  NeuronState detached() const;
};

/// One update of every neuron in `current`'s shape. The returned state's `y`
/// holds the spikes. `tau_a_param`, when given, supplies tau_a (one element)
/// and receives its gradient. Non-finite input throws NumericError naming
/// `layer`.
NeuronState lif_step(const NeuronState& prev, const Tensor& current, const NeuronConfig& cfg,
                     const Tensor* tau_a_param = nullptr, SpikeFn fn = SpikeFn::heaviside,
                     std::string_view layer = "neuron");

/// u_th + beta * a
Tensor effective_threshold(const NeuronState& state, const NeuronConfig& cfg);

/// Fraction of nonzero entries.
double firing_rate(const Tensor& spikes);

enum class Placement { first_layer, all, none };

std::string_view placement_name(Placement p);
/// Accepts "first", "all", "none". Throws ConfigError otherwise.
Placement parse_placement(std::string_view text);

/// A named neuron population with its own (optionally trainable) tau_a.
class NeuronLayer {
 public:
  NeuronLayer() = default;
  NeuronLayer(std::string name, NeuronConfig cfg);

  NeuronState step(const NeuronState& prev, const Tensor& current, SpikeFn fn = SpikeFn::heaviside) const;

  const std::string& name() const { return name_; }
  const NeuronConfig& config() const { return cfg_; }
  void set_threshold(Real u_th) { cfg_.u_th = u_th; }
  Real tau_a() const;
  /// Empty unless the layer is adaptive with a trainable tau_a.
  Tensor& tau_a_param() { return tau_a_; }
  const Tensor& tau_a_param() const { return tau_a_; }
  /// Clamps tau_a into [tau_a_min, tau_a_max].
  void project();

 private:
  std::string name_;
  NeuronConfig cfg_;
  Tensor tau_a_;
};

struct SequenceResult {
  std::vector<Tensor> spikes;
  std::vector<double> rates;
  NeuronState final_state;
};

/// Runs `layer` over a time-major input sequence from rest. `on_step` (if set)
/// receives the step index and the firing rate of that step.
SequenceResult run_sequence(const NeuronLayer& layer, std::span<const Tensor> inputs,
                            const std::function<void(std::size_t, double)>& on_step = {});

SEDN_END_NAMESPACE
