#pragma once

// Supervised training over stack sequences: truncated BPTT per sequence,
// Adam with poly decay, tau_a projection and a structured metrics log.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "sedn/eval.hpp"
#include "sedn/optim.hpp"

SEDN_BEGIN_NAMESPACE

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double poly_power = 0.9;
  std::uint64_t seed = 1;
  /// 0 disables clipping.
  double grad_clip = 0;
  std::size_t eval_batch = 8;
  /// Evaluate on the held-out split every this many epochs (and after the last).
  std::size_t eval_every = 1;
  /// First epoch to run (> 1 when resuming; the schedule continues from the optimizer's step count).
  std::size_t start_epoch = 1;
  /// Stop after this many seconds of wall time (0 = no limit).
  double time_budget_s = 0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0;
  double lr = 0;
  bool evaluated = false;
  double val_loss = 0;
  double val_miou = 0;
  double mean_fr = 0;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::uint64_t steps = 0;
  double seconds = 0;
  bool stopped_early = false;
};

struct TrainHooks {
  /// Receives one JSON object per line: {"epoch","split","loss","miou","mean_fr","lr"}.
  std::ostream* metrics = nullptr;
  std::function<void(const EpochStats&)> on_epoch;
};

/// Mean cross-entropy over the supervised steps of one batch, run from rest.
Tensor sequence_loss(const SpikingEdn& model, const SequenceBatch& batch, SpikeFn fn = SpikeFn::heaviside);

/// One optimizer step on one batch. Returns the loss. NumericError (with the
/// gradient norm and per-layer firing rates) when the loss is not finite.
double train_step(SpikingEdn& model, const SequenceBatch& batch, Adam& optimizer, double grad_clip = 0);

/// Trains in place. The model is left in inference mode. `optimizer`, when
/// given, must cover model.parameters() and may carry restored state.
TrainHistory train(SpikingEdn& model, std::span<const StackSequence> train_split,
                   std::span<const StackSequence> val_split, const TrainConfig& config, const TrainHooks& hooks = {},
                   Adam* optimizer = nullptr);

SEDN_END_NAMESPACE
