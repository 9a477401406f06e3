#pragma once

// Differentiable architecture search: softmax-mixed cell edges, per-transition
// resolution weights over the layer trellis, first-order bi-level updates and
// discrete genotype extraction.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "sedn/eval.hpp"
#include "sedn/optim.hpp"

SEDN_BEGIN_NAMESPACE

/// sum_o softmax(alpha)_o * outputs[o]. `alpha` is 1-D with one logit per output.
Tensor mixed_edge_forward(const Tensor& alpha, std::span<const Tensor> outputs);

/// Candidate operations of one cell edge, evaluated on a real-valued input.
/// Convolution candidates normalize without a learned scale and shift.
class MixedEdge {
 public:
  MixedEdge() = default;
  MixedEdge(const std::string& name, std::size_t channels, std::span<const EdgeOp> candidates, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, const Tensor& alpha, Profiler* profiler = nullptr) const;
  const std::vector<EdgeOp>& candidates() const { return ops_; }
  /// The convolution of candidate `i` (undefined for skip).
  ConvBn& op(std::size_t i) { return convs_[i]; }
  void set_training(bool on);
  void collect(TensorList& out);

 private:
  std::vector<EdgeOp> ops_;
  std::vector<ConvBn> convs_;
};

/// Edges of one cell in canonical order (node-major, then tap).
std::vector<std::pair<std::size_t, std::size_t>> cell_edge_slots();

/// Layer-level weights: for every layer and source level, a probability for
/// each reachable destination level (one level finer, same, one coarser).
/// Layer 0 leaves from level 0 (the stem resolution).
struct TransitionWeights {
  std::size_t layers = 0;
  std::size_t levels = kLevelFactors.size();
  /// [layer][from][move], move 0 = finer, 1 = keep, 2 = coarser; invalid moves hold 0.
  std::vector<double> w;

  TransitionWeights() = default;
  TransitionWeights(std::size_t layers, std::size_t levels);
  double at(std::size_t layer, std::size_t from, std::size_t to) const;
  double& at(std::size_t layer, std::size_t from, std::size_t to);
  /// Destination levels reachable from `from`, ascending.
  std::vector<std::size_t> moves(std::size_t from) const;
};

struct TrellisPath {
  std::vector<std::size_t> levels;  // one per layer
  double log_weight = 0;
};

/// Max-product decoding: the path from level 0 maximizing the product of
/// transition weights. Ties prefer the lower level at each layer.
TrellisPath decode_trellis(const TransitionWeights& weights);

struct ArchWeights {
  std::vector<EdgeOp> candidates;
  /// One row of logits per canonical cell edge, shared by every layer.
  std::vector<std::vector<double>> edge_alphas;
  TransitionWeights transitions;
};

/// Argmax op on every edge (lowest index on ties, with a warning) and the
/// decoded trellis path as cumulative factors.
Genotype extract_genotype(const ArchWeights& arch, std::uint64_t seed = 0, std::uint64_t epoch = 0);

/// A model the bi-level loop can drive: a loss on a batch, the ordinary
/// weights and the architecture logits.
template <class M, class B>
concept BilevelModel = requires(M& m, const B& batch) {
  { m.loss(batch) } -> std::same_as<Tensor>;
  { m.weight_parameters() } -> std::same_as<TensorList>;
  { m.arch_parameters() } -> std::same_as<TensorList>;
  { batch.size } -> std::convertible_to<std::size_t>;
};

struct BilevelLosses {
  double train = 0;
  double val = 0;
};

/// First-order alternation: a weight step on the training batch, then an
/// architecture step on the validation batch. `weight_opt` or `arch_opt` may
/// be null to freeze that group. DomainError on an empty batch.
template <class M, class B>
  requires BilevelModel<M, B>
BilevelLosses bilevel_step(M& model, const B& train_batch, const B& val_batch, Adam* weight_opt, Adam* arch_opt) {
  if (train_batch.size == 0 || val_batch.size == 0) throw DomainError("bi-level step on an empty split");
  BilevelLosses out;
  auto clear = [&] {
    for (const NamedTensor& t : model.weight_parameters()) t.tensor->zero_grad();
    for (const NamedTensor& t : model.arch_parameters()) t.tensor->zero_grad();
  };
  auto run = [&](const B& batch, Adam* opt) {
    clear();
    Graph g;
    const Tensor loss = model.loss(batch);
    const double v = loss.item();
    if (!std::isfinite(v)) throw NumericError("non-finite search loss");
    if (opt) {
      g.backward(loss);
      opt->step();
    }
    return v;
  };
  out.train = run(train_batch, weight_opt);
  out.val = run(val_batch, arch_opt);
  clear();
  return out;
}

struct SearchConfig {
  std::size_t layers = 4;  // at most 6
  std::vector<EdgeOp> candidates{kAllEdgeOps.begin(), kAllEdgeOps.end()};
  std::size_t epochs = 20;
  std::size_t warmup_epochs = 5;
  std::size_t batch_size = 4;
  double weight_lr = 1e-3;
  double arch_lr = 3e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Supernet over the full trellis. Every reachable (layer, level) holds a
/// cell whose edges mix all candidates; a cell's input is the
/// transition-weighted sum of the previous layer's resampled outputs and feeds
/// both cell taps. The final-layer outputs are projected, brought to 1/4
/// resolution and summed before a small spiking decoder.
class SuperNet {
 public:
  SuperNet(const ModelConfig& base, const SearchConfig& search);
  ~SuperNet();
  SuperNet(SuperNet&&) noexcept;
  SuperNet& operator=(SuperNet&&) noexcept;

  Tensor forward_step(const Tensor& events, std::vector<NeuronState>& state, const ForwardOptions& options = {}) const;
  std::vector<NeuronState> initial_state() const;

  /// Mean cross-entropy over the supervised steps of a batch.
  Tensor loss(const SequenceBatch& batch) const;
  TensorList weight_parameters();
  TensorList arch_parameters();
  void set_training(bool on);

  ArchWeights arch_weights() const;
  /// Softmax of the logits on canonical edge `edge`.
  std::vector<double> edge_weights(std::size_t edge) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct SearchEpoch {
  std::size_t epoch = 0;
  bool warmup = false;
  double train_loss = 0;
  double val_loss = 0;
};

struct SearchResult {
  Genotype genotype;
  std::vector<SearchEpoch> epochs;
};

/// Splits `sequences` in two halves (weights / architecture), warms the
/// weights up, alternates bi-level steps and extracts a genotype.
SearchResult run_search(SuperNet& net, std::span<const StackSequence> weight_split,
                        std::span<const StackSequence> arch_split, const SearchConfig& config,
                        const std::function<void(const SearchEpoch&)>& on_epoch = {});

/// One mixed edge {skip, conv3x3+BN} regressing a fixed normalized conv of
/// random inputs: conv can match the target, skip cannot.
class EdgeRegressionTask {
 public:
  struct Batch {
    std::size_t size = 0;
    Tensor input;
    Tensor target;
  };

  EdgeRegressionTask(std::size_t channels, std::size_t extent, std::uint64_t seed);

  Batch sample(std::size_t batch);
  Tensor loss(const Batch& batch) const;
  TensorList weight_parameters();
  TensorList arch_parameters();
  Tensor& alpha() { return alpha_; }
  const Tensor& target_kernel() const { return target_kernel_; }
  MixedEdge& edge() { return edge_; }
  /// Softmax weight of each candidate.
  std::vector<double> weights() const;

 private:
  std::size_t channels_;
  std::size_t extent_;
  std::mt19937_64 rng_;
  Tensor target_kernel_;
  MixedEdge edge_;
  Tensor alpha_;
};

SEDN_END_NAMESPACE
