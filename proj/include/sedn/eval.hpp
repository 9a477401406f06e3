#pragma once

// Segmentation metrics, batched and streaming inference, firing-rate
// statistics, operation counting and the energy model.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sedn/events.hpp"
#include "sedn/network.hpp"

SEDN_BEGIN_NAMESPACE

class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(std::size_t classes, std::uint8_t ignore = kIgnoreLabel);

  /// Counts (truth, prediction) pairs; pixels whose truth is `ignore` are skipped.
  void add(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> prediction);
  void merge(const ConfusionAccumulator& other);

  std::uint64_t at(std::size_t truth, std::size_t prediction) const { return counts_[truth * classes_ + prediction]; }
  std::uint64_t total() const { return total_; }
  std::size_t classes() const { return classes_; }

 private:
  std::size_t classes_;
  std::uint8_t ignore_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct MiouResult {
  double miou = 0;
  std::vector<double> per_class;
};

/// IoU_c = TP / max(1, TP + FP + FN); MIoU averages all classes.
/// DomainError on an empty accumulator.
MiouResult miou(const ConfusionAccumulator& acc);

/// Per-pixel argmax of [B, C, H, W] scores as B*H*W labels (lowest index wins ties).
std::vector<std::uint8_t> argmax_labels(const Tensor& scores);

/// Stacks of a batch of equal-length sequences, one tensor per time step.
struct SequenceBatch {
  std::size_t size = 0;
  std::size_t warmup = 0;
  std::vector<Tensor> events;  // [B, n, H, W] per step
  std::vector<Tensor> aug;     // [B, 1, H, W] per step, empty without images
  std::vector<std::vector<std::uint8_t>> labels;  // per supervised step, B*H*W
};

SequenceBatch make_batch(std::span<const StackSequence* const> sequences);

struct EvalResult {
  MiouResult metrics;
  ConfusionAccumulator confusion{2};
  double loss = 0;
  double mean_firing_rate = 0;
};

/// Runs every sequence from rest (warm-up steps unscored), without recording
/// gradients. The model's train/eval mode is left as is. A profiler, when
/// given, only sees supervised steps.
EvalResult evaluate(const SpikingEdn& model, std::span<const StackSequence> sequences, std::size_t batch_size = 8,
                    Profiler* profiler = nullptr);

/// Mean firing rate over every spiking layer recorded by `profiler`, weighted
/// by neuron count.
double mean_spike_rate(const Profiler& profiler);

/// Continuous inference over an unbounded stream of stacks.
class StreamSession {
 public:
  /// `reset_every` = 0 never resets; otherwise the state returns to rest
  /// before every step whose index is a multiple of it. The first step after
  /// a reset is a warm-up step and is not scored.
  StreamSession(const SpikingEdn& model, std::size_t reset_every = 0, Profiler* profiler = nullptr);

  struct Step {
    std::vector<std::uint8_t> prediction;
    bool scored = false;
  };

  Step step(const SbtStack& stack, const Image* image = nullptr, const LabelGrid* label = nullptr);

  const ModelState& state() const { return state_; }
  /// Continues from another session's state (hand-off between sessions).
  void set_state(ModelState state, std::size_t steps_done);
  std::size_t steps() const { return steps_; }
  const ConfusionAccumulator& confusion() const { return confusion_; }

 private:
  const SpikingEdn* model_;
  std::size_t reset_every_;
  Profiler* profiler_;
  ModelState state_;
  std::size_t steps_ = 0;
  std::size_t since_reset_ = 0;
  std::uint16_t width_ = 0;
  std::uint16_t height_ = 0;
  ConfusionAccumulator confusion_;
};

struct EnergyModel {
  double add_pj = 0.9;
  double mult_pj = 4.6;

  double energy_pj(double adds, double mults) const { return add_pj * adds + mult_pj * mults; }
};

struct LayerOps {
  std::string name;
  std::uint64_t macs_per_step = 0;  // A
  bool real_input = false;
  double input_rate = 0;  // s
  double steps = 0;       // T, in sample-steps
  double adds = 0;        // s * T * A for spike inputs
  double mults = 0;       // T * A for real-valued inputs
};

struct OpLedger {
  std::vector<LayerOps> layers;
  /// Elementwise multiplications outside synaptic layers, by source.
  std::vector<std::pair<std::string, std::uint64_t>> elementwise;
  double total_adds = 0;
  double total_mults = 0;
  /// Multiplications of the equivalent dense network (sum of T * A).
  double ann_macs = 0;
  /// Input firing rate of spike-driven layers, weighted by T * A.
  double mean_rate = 0;
  /// Elementwise multiplications inside spiking layers (BN scaling, gains);
  /// zero for a folded multiplication-free model. The first layer (stem 1 or
  /// the SSAM block) and the readout upsample are exempt.
  std::uint64_t spiking_multiplications = 0;
  EnergyModel energy;

  double energy_pj() const { return energy.energy_pj(total_adds, total_mults); }
  double ann_energy_pj() const { return energy.mult_pj * ann_macs; }
};

OpLedger ledger_from_profile(const Profiler& profiler, const EnergyModel& energy = {});

/// Profiles inference over `sequences`. StateError unless the model is folded.
OpLedger count_ops(const SpikingEdn& model, std::span<const StackSequence> sequences, std::size_t batch_size = 8,
                   const EnergyModel& energy = {});

void write_ledger(std::ostream& os, const OpLedger& ledger);

inline const std::vector<double> kRateBucketEdges = {0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};

struct LayerRates {
  std::string name;
  double mean = 0;
  /// Neuron counts per bucket [edge_i, edge_{i+1}); the last bucket includes 1.
  std::vector<std::uint64_t> histogram;
};

struct FiringRateReport {
  std::vector<double> edges = kRateBucketEdges;
  std::vector<LayerRates> layers;

  const LayerRates* find(const std::string& name) const;
};

FiringRateReport firing_rate_report(const Profiler& profiler);
/// layer,mean,bucket_lo,bucket_hi,count rows.
void write_histogram_csv(std::ostream& os, const FiringRateReport& report);

SEDN_END_NAMESPACE
