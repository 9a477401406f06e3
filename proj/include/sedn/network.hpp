#pragma once

// SpikingEDN: stem layers (or SSAM), genotype-built encoder cells, spiking
// ASPP and a spiking decoder with a real-valued, bilinearly upsampled readout.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sedn/genotype.hpp"
#include "sedn/layers.hpp"

SEDN_BEGIN_NAMESPACE

enum class SsamVariant { s1, s2, s3 };
enum class SsamFusion { additive, multiplicative };
/// Source of the extra single-channel input: none, an intensity image, or
/// the event stack itself (sum over its frames).
enum class AugSource { none, image, events };

std::string_view ssam_variant_name(SsamVariant v);
SsamVariant parse_ssam_variant(std::string_view s);
std::string_view aug_source_name(AugSource a);
AugSource parse_aug_source(std::string_view s);

struct ModelConfig {
  std::size_t event_channels = 5;
  std::size_t num_classes = 3;
  std::size_t stem_channels = 16;
  std::size_t node_channels = 8;
  std::size_t aspp_channels = 8;
  std::size_t decoder_channels = 16;
  std::vector<std::size_t> aspp_dilations = {6, 12, 18};
  Genotype genotype = default_genotype({4, 8, 8});

  bool ssam = false;
  SsamVariant ssam_variant = SsamVariant::s3;
  SsamFusion ssam_fusion = SsamFusion::additive;
  AugSource aug = AugSource::none;

  Placement placement = Placement::first_layer;
  /// Template for every neuron; placement decides which become adaptive.
  NeuronConfig neuron;
  Real ailif_beta = Real(0.07);
  Real ailif_tau_a = Real(0.3);
  /// Overrides u_th of the first spiking layer (stem 1 or the SSAM fusion layer).
  Real first_layer_threshold = Real(-1);

  std::uint64_t seed = 1;

  /// ConfigError on inconsistent settings (SSAM without an augmented input,
  /// genotype problems, zero widths).
  void validate() const;
  std::string describe() const;
};

/// Neuron states of every spiking layer, in build order.
struct ModelState {
  std::vector<NeuronState> neurons;

  ModelState detached() const;
  bool empty() const;
};

struct ForwardOptions {
  SpikeFn spike_fn = SpikeFn::heaviside;
  Profiler* profiler = nullptr;
};

class SpikingEdn {
 public:
  explicit SpikingEdn(const ModelConfig& config);
  ~SpikingEdn();
  SpikingEdn(SpikingEdn&&) noexcept;
  SpikingEdn& operator=(SpikingEdn&&) noexcept;

  /// Deep copy (parameters, statistics, mode and folding state).
  SpikingEdn clone() const;

  /// One time step. `events` is [B, n, H, W]; `aug` is [B, 1, H, W] and is
  /// required when the configuration takes an image. Returns class scores
  /// [B, classes, H, W]. `state` is updated in place.
  Tensor forward_step(const Tensor& events, const Tensor* aug, ModelState& state,
                      const ForwardOptions& options = {}) const;

  ModelState initial_state() const;
  const ModelConfig& config() const;

  void set_training(bool on);
  bool training() const;
  /// Folds every batch norm into its convolution. StateError in training mode.
  void fold();
  bool folded() const;

  /// Parameters and normalization statistics, in a stable order.
  TensorList tensors();
  TensorList parameters();
  std::size_t parameter_count() const;
  /// Clamps every trainable tau_a into its range.
  void project();
  std::vector<const NeuronLayer*> neuron_layers() const;
  /// Name of the first spiking layer (stem 1 or the SSAM fusion layer).
  std::string first_layer_name() const;

 private:
  struct Impl;
  explicit SpikingEdn(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Builds a model for `genotype` using the remaining fields of `base`.
SpikingEdn build_from_genotype(const Genotype& genotype, const ModelConfig& base);

SEDN_END_NAMESPACE
