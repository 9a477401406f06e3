#include <algorithm>
#include <random>
#include <string>

#include "doctest.h"
#include "sedn/log.hpp"
#include "sedn/synth.hpp"

using namespace sedn;

namespace {

EventStream random_stream(std::mt19937_64& rng, std::uint16_t w, std::uint16_t h, std::size_t n, std::uint32_t t_max) {
  EventStream s{w, h, {}};
  std::vector<std::uint32_t> ts(n);
  for (auto& t : ts) t = static_cast<std::uint32_t>(rng() % t_max);
  std::sort(ts.begin(), ts.end());
  for (std::uint32_t t : ts) {
    s.events.push_back({static_cast<std::uint16_t>(rng() % w), static_cast<std::uint16_t>(rng() % h), t,
                        static_cast<std::int8_t>(rng() & 1 ? 1 : -1)});
  }
  return s;
}

struct WarningCapture {
  std::vector<std::string> messages;
  WarningSink previous;
  WarningCapture() {
    previous = set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_sink(previous); }
};

}  // namespace

TEST_SUITE("events") {
  TEST_CASE("stacking equals brute-force accumulation per window") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const std::uint16_t w = 1 + rng() % 9, h = 1 + rng() % 7;
      const std::uint32_t frames = 1 + rng() % 5, dt = frames * (1 + rng() % 40);
      const std::uint64_t start = rng() % 3 == 0 ? 0 : rng() % 50;
      EventStream s = random_stream(rng, w, h, 300, 4 * dt);
      for (auto& e : s.events) e.t += static_cast<std::uint32_t>(start);
      StackingOptions opt{dt, frames, start, std::nullopt};
      const auto stacks = stack_events(s, opt);
      const std::uint64_t last = s.events.back().t;
      REQUIRE(stacks.size() == (last - start) / dt + 1);
      const std::uint64_t sub = dt / frames;
      for (std::size_t k = 0; k < stacks.size(); ++k) {
        CHECK(stacks[k].start_us == start + k * dt);
        for (std::uint32_t f = 0; f < frames; ++f) {
          const std::uint64_t lo = start + k * dt + f * sub, hi = lo + sub;
          for (std::uint16_t y = 0; y < h; ++y)
            for (std::uint16_t x = 0; x < w; ++x) {
              std::int32_t expect = 0;
              for (const auto& e : s.events)
                if (e.x == x && e.y == y && e.t >= lo && e.t < hi) expect += e.p;
              CHECK(stacks[k].at(f, x, y) == expect);
            }
        }
      }
    }
  }

  TEST_CASE("an event on a window boundary belongs to the later window") {
    EventStream s{2, 1, {{0, 0, 99, 1}, {0, 0, 100, 1}, {1, 0, 200, -1}}};
    const auto st = stack_events(s, StackingOptions{200, 2, 0, std::nullopt});
    REQUIRE(st.size() == 2);
    CHECK(st[0].at(0, 0, 0) == 1);
    CHECK(st[0].at(1, 0, 0) == 1);
    CHECK(st[1].at(0, 1, 0) == -1);
    const Tensor c = st[0].collapsed();
    CHECK(c[0] == 2);
    CHECK(st[0].to_tensor().shape() == Shape{1, 2, 1, 2});
  }

  TEST_CASE("explicit stack count pads and truncates") {
    EventStream s{1, 1, {{0, 0, 10, 1}, {0, 0, 500, 1}}};
    StackingOptions opt{100, 1, 0, std::size_t{2}};
    const auto st = stack_events(s, opt);
    REQUIRE(st.size() == 2);
    CHECK(st[0].at(0, 0, 0) == 1);
    CHECK(st[1].at(0, 0, 0) == 0);
    opt.count = std::nullopt;
    CHECK(stack_events(EventStream{1, 1, {}}, opt).size() == 1);
  }

  TEST_CASE("invalid streams are rejected") {
    CHECK_THROWS_AS(validate_stream(EventStream{2, 2, {{2, 0, 0, 1}}}), DomainError);
    CHECK_THROWS_AS(validate_stream(EventStream{2, 2, {{0, 0, 0, 0}}}), DomainError);
    CHECK_THROWS_AS(validate_stream(EventStream{2, 2, {{0, 0, 5, 1}, {0, 0, 4, 1}}}), DomainError);
    CHECK_THROWS_AS(stack_events(EventStream{2, 2, {}}, StackingOptions{100, 3, 0, std::nullopt}), DomainError);
    CHECK_THROWS_AS(stack_events(EventStream{2, 2, {{0, 0, 5, 1}}}, StackingOptions{100, 1, 10, std::nullopt}),
                    DomainError);
  }

  TEST_CASE("sequences are consecutive and non-overlapping") {
    std::vector<SbtStack> stacks(11);
    std::vector<LabelGrid> labels(11);
    for (std::size_t i = 0; i < 11; ++i) {
      stacks[i] = SbtStack{2, 2, 1, i * 10, i * 10 + 10, std::vector<std::int32_t>(4, 0)};
      labels[i] = LabelGrid{2, 2, std::vector<std::uint8_t>(4, static_cast<std::uint8_t>(i))};
    }
    const auto seqs = make_sequences(stacks, labels, 4, 1);
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[1].stacks[0].start_us == 40);
    CHECK(seqs[1].labels.size() == 3);
    CHECK(seqs[1].labels[0].labels[0] == 5);
    CHECK(seqs[0].supervised_steps() == 3);
    CHECK_THROWS_AS(make_sequences(stacks, labels, 2, 2), DomainError);
    WarningCapture cap;
    CHECK(make_sequences(std::span(stacks).first(3), std::span(labels).first(3), 4, 1).empty());
    CHECK(cap.messages.size() == 1);
  }

  TEST_CASE("image channel fusion checks the count") {
    StackSequence seq;
    seq.stacks.resize(2, SbtStack{1, 1, 1, 0, 1, {0}});
    CHECK(fuse_image_channel(seq, {}).aug.empty());
    const std::vector<Image> imgs(2, Image{1, 1, {0.5f}});
    CHECK(fuse_image_channel(seq, imgs).aug.size() == 2);
    CHECK_THROWS(fuse_image_channel(seq, std::span(imgs).first(1)));
  }

  TEST_CASE("synthesis is deterministic per seed") {
    RandomSceneOptions o;
    o.duration_us = 300'000;
    const SceneSpec spec = random_scene_spec(o, 42);
    const Scene a = synthesize_scene(spec, 42), b = synthesize_scene(spec, 42);
    CHECK(a.stream == b.stream);
    CHECK(a.labels == b.labels);
    CHECK(a.images == b.images);
    CHECK(a.labels.size() == 6);
    CHECK_FALSE(a.stream.events.empty());
    CHECK_NOTHROW(validate_stream(a.stream));
    const Scene c = synthesize_scene(random_scene_spec(o, 43), 43);
    CHECK_FALSE(c.stream == a.stream);
  }

  TEST_CASE("toy dataset shape") {
    ToyDatasetOptions o;
    o.train_scenes = 2;
    o.test_scenes = 1;
    o.scene.duration_us = 400'000;
    const ToyDataset ds = make_toy_dataset(o);
    CHECK(ds.train.size() == 4);
    CHECK(ds.test.size() == 2);
    CHECK(ds.test_stream.stacks.size() == 8);
    CHECK(ds.train[0].aug.size() == 4);
    for (const auto& s : ds.train)
      for (const auto& l : s.labels)
        for (auto v : l.labels) CHECK(v < 3);
  }
}
