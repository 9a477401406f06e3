#pragma once

// Binary formats (events, label grids, images, checkpoints) and atomic file
// writes. Everything is little-endian; readers reject trailing bytes and
// report the byte offset of the first problem.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sedn/network.hpp"
#include "sedn/optim.hpp"
#include "sedn/synth.hpp"

SEDN_BEGIN_NAMESPACE

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// "EVS1", width u16, height u16, count u64, then (x u16, y u16, t u32, p i8) records.
Bytes encode_events(const EventStream& stream);
EventStream decode_events(std::span<const std::uint8_t> bytes);

/// One or more concatenated "LBL1" blocks (width u16, height u16, then u8 labels).
Bytes encode_label_grids(std::span<const LabelGrid> grids);
std::vector<LabelGrid> decode_label_grids(std::span<const std::uint8_t> bytes);

/// One or more concatenated "IMG1" blocks (width u16, height u16, then f32 values).
Bytes encode_images(std::span<const Image> images);
std::vector<Image> decode_images(std::span<const std::uint8_t> bytes);

/// <dir>/<stem>.evs, .lbl and .img.
void save_scene(const std::filesystem::path& dir, const std::string& stem, const Scene& scene);
Scene load_scene(const std::filesystem::path& dir, const std::string& stem);

/// File stem of a dataset scene: train_000, test_004, ...
std::string scene_stem(bool test, std::size_t index);

struct SceneStats {
  std::string stem;
  std::uint64_t events = 0;
  /// Events per stacking interval over the scene duration.
  std::vector<std::uint64_t> density;
};

/// Synthesizes every scene of `options` into `dir`.
std::vector<SceneStats> write_dataset(const std::filesystem::path& dir, const ToyDatasetOptions& options);
/// Loads the scenes written by write_dataset and cuts them into sequences.
ToyDataset read_dataset(const std::filesystem::path& dir, const ToyDatasetOptions& options);
/// Density of a stream in bins of `bin_us` covering [0, duration_us).
std::vector<std::uint64_t> event_density(const EventStream& stream, std::uint64_t bin_us, std::uint64_t duration_us);

/// Flat key/value view of a model configuration (the genotype is kept apart).
std::map<std::string, std::string> model_config_entries(const ModelConfig& config);
/// Applies `entries` on top of `base`. ConfigError for unknown keys or bad values.
ModelConfig model_config_from_entries(const std::map<std::string, std::string>& entries, ModelConfig base = {});

struct CheckpointMeta {
  ModelConfig model;
  bool folded = false;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  /// Adam state, present when the checkpoint can resume training.
  bool has_optimizer = false;
  std::uint64_t optimizer_steps = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "SEDN", version u32, dtype u8, metadata (u32 length + JSON), tensor count
/// u32, then per tensor: name (u16 length + bytes), dtype u8, rank u8, dims
/// u64 each, raw values, CRC-32 of the record.
Bytes encode_checkpoint(SpikingEdn& model, const CheckpointMeta& meta, Adam* optimizer = nullptr);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  SpikingEdn model;
  /// Adam moments by parameter name (empty without optimizer state).
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
};

/// ParseError with offset on bad magic, version, checksum, truncation or
/// trailing data; ParseError when the stored precision differs from this build.
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, SpikingEdn& model, const CheckpointMeta& meta,
                     Adam* optimizer = nullptr);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored Adam moments into `optimizer` (matched by parameter name).
void restore_optimizer(const LoadedCheckpoint& ckpt, Adam& optimizer);

SEDN_END_NAMESPACE
