#pragma once

// Event streams, time-based stacking (SBT), label/image grids and sequence
// assembly for streaming training.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sedn/tensor.hpp"

SEDN_BEGIN_NAMESPACE

struct EventRecord {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint32_t t = 0;  // microseconds
  std::int8_t p = 1;    // +1 or -1

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct EventStream {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<EventRecord> events;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Throws DomainError naming the first offending index when a record lies
/// outside the sensor, has polarity other than +-1, or breaks time order.
void validate_stream(const EventStream& stream);

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct LabelGrid {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> labels;  // row-major

  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

struct Image {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<float> values;  // row-major intensities

  friend bool operator==(const Image&, const Image&) = default;
};

struct SbtStack {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint32_t frames_per_stack = 0;
  std::uint64_t start_us = 0;
  std::uint64_t end_us = 0;
  std::vector<std::int32_t> frames;  // [n, H, W], signed polarity sums

  std::int32_t at(std::size_t frame, std::size_t x, std::size_t y) const {
    return frames[(frame * height + y) * width + x];
  }
  /// [1, n, H, W]
  Tensor to_tensor() const;
  /// [1, 1, H, W] sum over the n frames.
  Tensor collapsed() const;
};

struct StackingOptions {
  std::uint32_t delta_t_us = 50000;
  std::uint32_t frames = 5;
  std::uint64_t start_us = 0;
  /// Number of stacks to emit. By default enough to cover the last event
  /// (one all-zero stack for an empty stream). Events past the covered
  /// range are ignored.
  std::optional<std::size_t> count;
};

/// Frame i of stack k covers the half-open window
/// [start + k*dt + i*dt/n, start + k*dt + (i+1)*dt/n); an event on a boundary
/// belongs to the later window. Events before `start_us` are rejected.
std::vector<SbtStack> stack_events(const EventStream& stream, const StackingOptions& options = {});

struct StackSequence {
  std::vector<SbtStack> stacks;
  /// One label per supervised step: stacks[warmup..] map to labels[0..].
  std::vector<LabelGrid> labels;
  /// Empty, or one intensity image per stack.
  std::vector<Image> aug;
  std::size_t warmup = 1;

  std::size_t supervised_steps() const { return stacks.size() - warmup; }
};

/// Splits the stacks into consecutive, non-overlapping runs of `seq_len`;
/// a trailing partial run is dropped. `labels` holds one grid per stack.
/// Fewer stacks than `seq_len` yields an empty result and a warning.
std::vector<StackSequence> make_sequences(std::span<const SbtStack> stacks, std::span<const LabelGrid> labels,
                                          std::size_t seq_len = 4, std::size_t warmup = 1);

/// Attaches one image per stack. An empty `images` returns `seq` unchanged.
StackSequence fuse_image_channel(StackSequence seq, std::span<const Image> images);

/// [1, 1, H, W] copy of an image.
Tensor image_tensor(const Image& image);

SEDN_END_NAMESPACE
