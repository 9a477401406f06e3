#pragma once

// Moving-shapes event simulator used as a desk-scale segmentation dataset.
// Each class carries its own texture scale (class 1: per-pixel, class 2: 4x4
// blocks, ...), so classes are separable from events alone.

#include <cstdint>
#include <vector>

#include "sedn/events.hpp"

SEDN_BEGIN_NAMESPACE

enum class ShapeKind { rectangle, disk };

struct MovingShape {
  ShapeKind kind = ShapeKind::rectangle;
  std::uint8_t cls = 1;
  double x = 0;  // top-left corner at t = 0, pixels
  double y = 0;
  double w = 16;  // disks use w as the diameter
  double h = 16;
  double vx = 0;  // pixels per second
  double vy = 0;
  float intensity = 0.9f;  // used when the scene is untextured
};

struct SceneSpec {
  std::uint16_t width = 64;
  std::uint16_t height = 64;
  std::uint64_t duration_us = 2'000'000;
  std::uint32_t micro_dt_us = 1000;
  std::uint32_t label_period_us = 50'000;
  double contrast = 0.15;
  std::uint8_t num_classes = 3;
  bool textured = true;
  float background = 0.5f;
  std::vector<MovingShape> shapes;
};

struct Scene {
  EventStream stream;
  /// Label grid and intensity image at the end of every label period.
  std::vector<LabelGrid> labels;
  std::vector<Image> images;
};

/// Texel edge length of a class's texture.
std::uint32_t texel_size(std::uint8_t cls);

/// Renders the scene at time `t_us` (shapes bounce off the sensor borders).
void render_scene(const SceneSpec& spec, std::uint64_t seed, std::uint64_t t_us, Image* image, LabelGrid* labels);

/// Deterministic for a given (spec, seed). Events fire whenever a pixel's
/// log intensity has moved a whole contrast step away from its reference;
/// each event is stamped in the middle of its micro-step.
Scene synthesize_scene(const SceneSpec& spec, std::uint64_t seed);

struct RandomSceneOptions {
  std::uint16_t width = 64;
  std::uint16_t height = 64;
  std::uint64_t duration_us = 2'000'000;
  std::uint8_t num_classes = 3;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 3;
  double min_size = 16;
  double max_size = 28;
  double min_speed = 40;
  double max_speed = 120;
  double contrast = 0.15;
};

SceneSpec random_scene_spec(const RandomSceneOptions& options, std::uint64_t seed);

/// Stacks, one label per stack, one image per stack.
struct StreamData {
  std::vector<SbtStack> stacks;
  std::vector<LabelGrid> labels;
  std::vector<Image> images;
};

StreamData scene_to_stream(const Scene& scene, const StackingOptions& stacking);
void append_stream(StreamData& dst, const StreamData& src);

struct ToyDatasetOptions {
  RandomSceneOptions scene;
  std::size_t train_scenes = 20;
  std::size_t test_scenes = 5;
  std::size_t seq_len = 4;
  std::size_t warmup = 1;
  StackingOptions stacking;
  std::uint64_t seed = 7;
};

struct ToyDataset {
  std::vector<StackSequence> train;
  std::vector<StackSequence> test;
  /// Held-out scenes concatenated into one continuous stream.
  StreamData test_stream;
};

/// Scene `index` of the dataset described by `options`.
Scene toy_scene(const ToyDatasetOptions& options, std::size_t index);
/// Cuts a scene into sequences (attaching its images when present) and, for
/// test scenes, appends it to the continuous test stream.
void add_scene(ToyDataset& dataset, const Scene& scene, bool is_test, const ToyDatasetOptions& options);
/// Images are always attached to the sequences.
ToyDataset make_toy_dataset(const ToyDatasetOptions& options);

SEDN_END_NAMESPACE
