#include "sedn/synth.hpp"

#include <cmath>
#include <random>
#include <string>

SEDN_BEGIN_NAMESPACE

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

float texel_value(std::uint64_t seed, std::size_t shape, std::int64_t tx, std::int64_t ty) {
  std::uint64_t h = mix(seed ^ (shape * 0x632be59bd9b4e019ULL));
  h = mix(h ^ static_cast<std::uint64_t>(tx));
  h = mix(h ^ static_cast<std::uint64_t>(ty));
  return 0.1f + 0.85f * static_cast<float>(h >> 40) / static_cast<float>(1ULL << 24);
}

// Position of a point bouncing between 0 and `limit`.
double bounce(double start, double velocity, double t, double limit) {
  if (limit <= 0) return 0;
  const double period = 2 * limit;
  double m = std::fmod(start + velocity * t, period);
  if (m < 0) m += period;
  return m <= limit ? m : period - m;
}

void check_spec(const SceneSpec& spec) {
  if (spec.width == 0 || spec.height == 0) throw DomainError("scene has a zero sensor size");
  if (spec.duration_us == 0) throw DomainError("scene has zero duration");
  if (spec.shapes.empty()) throw DomainError("scene lists no shapes");
  if (spec.micro_dt_us == 0 || spec.label_period_us == 0) throw DomainError("scene time steps must be positive");
  if (!(spec.contrast > 0)) throw DomainError("contrast threshold must be positive");
  for (const MovingShape& s : spec.shapes) {
    if (s.cls == 0 || s.cls >= spec.num_classes) {
      throw DomainError("shape class " + std::to_string(s.cls) + " outside 1.." + std::to_string(spec.num_classes - 1));
    }
    if (!(s.w > 0 && s.h > 0)) throw DomainError("shape with empty extent");
  }
}

}  // namespace

std::uint32_t texel_size(std::uint8_t cls) {
  static constexpr std::uint32_t sizes[] = {1, 4, 2, 8};
  return sizes[(cls - 1u) % 4u];
}

void render_scene(const SceneSpec& spec, std::uint64_t seed, std::uint64_t t_us, Image* image, LabelGrid* labels) {
  const std::size_t w = spec.width, h = spec.height;
  if (image) {
    image->width = spec.width;
    image->height = spec.height;
    image->values.assign(w * h, spec.background);
  }
  if (labels) {
    labels->width = spec.width;
    labels->height = spec.height;
    labels->labels.assign(w * h, 0);
  }
  const double t = static_cast<double>(t_us) * 1e-6;
  for (std::size_t si = 0; si < spec.shapes.size(); ++si) {
    const MovingShape& s = spec.shapes[si];
    const double ox = bounce(s.x, s.vx, t, spec.width - s.w);
    const double oy = bounce(s.y, s.vy, t, spec.height - s.h);
    const double texel = texel_size(s.cls);
    const long y0 = std::max(0L, static_cast<long>(std::floor(oy)));
    const long y1 = std::min(static_cast<long>(h), static_cast<long>(std::ceil(oy + s.h)) + 1);
    const long x0 = std::max(0L, static_cast<long>(std::floor(ox)));
    const long x1 = std::min(static_cast<long>(w), static_cast<long>(std::ceil(ox + s.w)) + 1);
    for (long py = y0; py < y1; ++py) {
      for (long px = x0; px < x1; ++px) {
        const double lx = px + 0.5 - ox;
        const double ly = py + 0.5 - oy;
        bool inside;
        if (s.kind == ShapeKind::rectangle) {
          inside = lx >= 0 && lx < s.w && ly >= 0 && ly < s.h;
        } else {
          const double r = s.w / 2;
          inside = (lx - r) * (lx - r) + (ly - r) * (ly - r) <= r * r;
        }
        if (!inside) continue;
        const std::size_t idx = static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px);
        if (image) {
          image->values[idx] =
              spec.textured ? texel_value(seed, si, static_cast<std::int64_t>(std::floor(lx / texel)),
                                          static_cast<std::int64_t>(std::floor(ly / texel)))
                            : s.intensity;
        }
        if (labels) labels->labels[idx] = s.cls;
      }
    }
  }
}

Scene synthesize_scene(const SceneSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  Scene scene;
  scene.stream.width = spec.width;
  scene.stream.height = spec.height;
  const std::size_t w = spec.width, h = spec.height;
  constexpr float kEps = 0.01f;

  Image frame;
  render_scene(spec, seed, 0, &frame, nullptr);
  std::vector<double> ref(w * h);
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = std::log(frame.values[i] + kEps);

  const std::uint64_t steps = spec.duration_us / spec.micro_dt_us;
  for (std::uint64_t j = 1; j <= steps; ++j) {
    const std::uint64_t t = j * spec.micro_dt_us;
    render_scene(spec, seed, t, &frame, nullptr);
    const auto stamp = static_cast<std::uint32_t>(t - spec.micro_dt_us / 2);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const double diff = std::log(frame.values[i] + kEps) - ref[i];
        const auto crossings = static_cast<long>(std::floor(std::fabs(diff) / spec.contrast));
        if (crossings == 0) continue;
        const std::int8_t p = diff > 0 ? 1 : -1;
        for (long c = 0; c < crossings; ++c) {
          scene.stream.events.push_back(
              {static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), stamp, p});
        }
        ref[i] += p * crossings * spec.contrast;
      }
    }
  }

  const std::uint64_t periods = spec.duration_us / spec.label_period_us;
  scene.labels.resize(periods);
  scene.images.resize(periods);
  for (std::uint64_t k = 0; k < periods; ++k) {
    render_scene(spec, seed, (k + 1) * spec.label_period_us, &scene.images[k], &scene.labels[k]);
  }
  return scene;
}

SceneSpec random_scene_spec(const RandomSceneOptions& o, std::uint64_t seed) {
  if (o.num_classes < 2) throw DomainError("a scene needs at least two classes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SceneSpec spec;
  spec.width = o.width;
  spec.height = o.height;
  spec.duration_us = o.duration_us;
  spec.num_classes = o.num_classes;
  spec.contrast = o.contrast;
  const std::size_t n = o.min_shapes + static_cast<std::size_t>(rng() % (o.max_shapes - o.min_shapes + 1));
  for (std::size_t i = 0; i < n; ++i) {
    MovingShape s;
    s.kind = (rng() & 1) ? ShapeKind::disk : ShapeKind::rectangle;
    s.cls = static_cast<std::uint8_t>(1 + (i + rng() % (o.num_classes - 1)) % (o.num_classes - 1));
    s.w = between(o.min_size, o.max_size);
    s.h = s.kind == ShapeKind::disk ? s.w : between(o.min_size, o.max_size);
    s.x = between(0, std::max(0.0, o.width - s.w));
    s.y = between(0, std::max(0.0, o.height - s.h));
    const double speed = between(o.min_speed, o.max_speed);
    const double angle = between(0, 2 * 3.14159265358979323846);
    s.vx = speed * std::cos(angle);
    s.vy = speed * std::sin(angle);
    s.intensity = static_cast<float>(between(0.1, 0.95));
    spec.shapes.push_back(s);
  }
  return spec;
}

StreamData scene_to_stream(const Scene& scene, const StackingOptions& stacking) {
  StackingOptions opt = stacking;
  opt.count = scene.labels.size();
  StreamData d;
  d.stacks = stack_events(scene.stream, opt);
  d.labels = scene.labels;
  d.images = scene.images;
  return d;
}

void append_stream(StreamData& dst, const StreamData& src) {
  dst.stacks.insert(dst.stacks.end(), src.stacks.begin(), src.stacks.end());
  dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
  dst.images.insert(dst.images.end(), src.images.begin(), src.images.end());
}

Scene toy_scene(const ToyDatasetOptions& o, std::size_t index) {
  const std::uint64_t scene_seed = mix(o.seed * 1000003ULL + index);
  return synthesize_scene(random_scene_spec(o.scene, scene_seed), scene_seed);
}

void add_scene(ToyDataset& ds, const Scene& scene, bool is_test, const ToyDatasetOptions& o) {
  const StreamData data = scene_to_stream(scene, o.stacking);
  auto seqs = make_sequences(data.stacks, data.labels, o.seq_len, o.warmup);
  for (std::size_t q = 0; q < seqs.size(); ++q) {
    if (data.images.size() < (q + 1) * o.seq_len) {
      (is_test ? ds.test : ds.train).push_back(std::move(seqs[q]));
      continue;
    }
    const std::span<const Image> imgs(data.images.data() + q * o.seq_len, o.seq_len);
    (is_test ? ds.test : ds.train).push_back(fuse_image_channel(std::move(seqs[q]), imgs));
  }
  if (is_test) append_stream(ds.test_stream, data);
}

ToyDataset make_toy_dataset(const ToyDatasetOptions& o) {
  ToyDataset ds;
  const std::size_t total = o.train_scenes + o.test_scenes;
  for (std::size_t s = 0; s < total; ++s) add_scene(ds, toy_scene(o, s), s >= o.train_scenes, o);
  return ds;
}

SEDN_END_NAMESPACE
