#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "sedn/eval.hpp"
#include "sedn/synth.hpp"
#include "sedn/train.hpp"
#include "support.hpp"

using namespace sedn;
using namespace testing;

namespace {

// IoU from explicit pixel index sets.
double set_miou(const std::vector<std::uint8_t>& truth, const std::vector<std::uint8_t>& pred, std::size_t classes) {
  double total = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::set<std::size_t> t, p;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == kIgnoreLabel) continue;
      if (truth[i] == c) t.insert(i);
      if (pred[i] == c) p.insert(i);
    }
    std::size_t inter = 0;
    for (std::size_t i : t) inter += p.count(i);
    const std::size_t uni = t.size() + p.size() - inter;
    total += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(classes);
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.stem_channels = 8;
  c.node_channels = 4;
  c.aspp_channels = 4;
  c.decoder_channels = 8;
  c.aspp_dilations = {1, 2};
  c.genotype = default_genotype({4, 8});
  return c;
}

ToyDataset tiny_dataset() {
  ToyDatasetOptions o;
  o.train_scenes = 1;
  o.test_scenes = 2;
  o.scene.width = 32;
  o.scene.height = 32;
  o.scene.duration_us = 800'000;
  o.scene.min_size = 8;
  o.scene.max_size = 14;
  return make_toy_dataset(o);
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("MIoU equals the per-pixel set oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t classes = 2 + rng() % 4, n = 1 + rng() % 200;
      std::vector<std::uint8_t> t(n), p(n);
      for (std::size_t i = 0; i < n; ++i) {
        t[i] = rng() % 10 == 0 ? kIgnoreLabel : static_cast<std::uint8_t>(rng() % classes);
        p[i] = static_cast<std::uint8_t>(rng() % classes);
      }
      if (std::all_of(t.begin(), t.end(), [](auto v) { return v == kIgnoreLabel; })) t[0] = 0;
      ConfusionAccumulator acc(classes);
      acc.add(std::span(t).first(n / 2), std::span(p).first(n / 2));
      ConfusionAccumulator rest(classes);
      rest.add(std::span(t).subspan(n / 2), std::span(p).subspan(n / 2));
      acc.merge(rest);
      CHECK(miou(acc).miou == doctest::Approx(set_miou(t, p, classes)).epsilon(1e-12));
    }
  }

  TEST_CASE("MIoU corner cases") {
    ConfusionAccumulator empty(3);
    CHECK_THROWS_AS(miou(empty), DomainError);
    ConfusionAccumulator perfect(2);
    const std::vector<std::uint8_t> l{0, 1, 1};
    perfect.add(l, l);
    CHECK(miou(perfect).miou == 1.0);
    ConfusionAccumulator absent(3);
    absent.add(l, l);
    CHECK(miou(absent).miou == doctest::Approx(2.0 / 3));
    CHECK_THROWS(absent.add(l, std::vector<std::uint8_t>{0}));
  }

  TEST_CASE("argmax prefers the lowest class on ties") {
    const Tensor s({1, 3, 1, 2}, {Real(1), Real(0), Real(1), Real(2), Real(0), Real(2)});
    CHECK(argmax_labels(s) == std::vector<std::uint8_t>{0, 1});
  }

  TEST_CASE("streaming with resets at sequence boundaries matches batched evaluation") {
    const ToyDataset ds = tiny_dataset();
    SpikingEdn m(tiny_model());
    m.set_training(false);
    const EvalResult batched = evaluate(m, ds.test, 3);
    StreamSession s(m, 4);
    const auto& st = ds.test_stream;
    for (std::size_t i = 0; i < st.stacks.size(); ++i) {
      // evaluate() scores only the stacks after each sequence's warm-up step.
      const auto r = s.step(st.stacks[i], nullptr, &st.labels[i]);
      CHECK(r.scored == (i % 4 != 0));
    }
    CHECK(s.confusion().total() == batched.confusion.total());
    CHECK(miou(s.confusion()).miou == doctest::Approx(batched.metrics.miou).epsilon(1e-12));
  }

  TEST_CASE("split-session hand-off is bit-identical") {
    const ToyDataset ds = tiny_dataset();
    SpikingEdn m(tiny_model());
    m.set_training(false);
    const auto& st = ds.test_stream;
    for (const std::size_t reset : {0u, 3u}) {
      StreamSession whole(m, reset);
      std::vector<std::vector<std::uint8_t>> a;
      for (std::size_t i = 0; i < st.stacks.size(); ++i) a.push_back(whole.step(st.stacks[i], nullptr, &st.labels[i]).prediction);
      StreamSession first(m, reset);
      std::vector<std::vector<std::uint8_t>> b;
      const std::size_t cut = 5;
      for (std::size_t i = 0; i < cut; ++i) b.push_back(first.step(st.stacks[i], nullptr, &st.labels[i]).prediction);
      StreamSession second(m, reset);
      second.set_state(first.state(), first.steps());
      for (std::size_t i = cut; i < st.stacks.size(); ++i) b.push_back(second.step(st.stacks[i], nullptr, &st.labels[i]).prediction);
      CHECK(a == b);
      for (std::size_t k = 0; k < whole.state().neurons.size(); ++k) {
        CHECK(max_abs_diff(whole.state().neurons[k].u, second.state().neurons[k].u) == 0);
      }
    }
  }

  TEST_CASE("stream rejects a resolution change") {
    SpikingEdn m(tiny_model());
    StreamSession s(m);
    s.step(SbtStack{32, 32, 5, 0, 1, std::vector<std::int32_t>(5 * 32 * 32, 0)});
    CHECK_THROWS_AS(s.step(SbtStack{16, 16, 5, 0, 1, std::vector<std::int32_t>(5 * 16 * 16, 0)}), ShapeError);
  }

  TEST_CASE("ledger follows the rate-times-steps-times-A construction") {
    Profiler p;
    const Tensor spikes({2, 1, 1, 4}, {Real(1), Real(0), Real(0), Real(0), Real(1), Real(1), Real(0), Real(0)});
    p.synaptic("enc", spikes, 100, false);  // rates 1/4 and 1/2
    p.synaptic("enc", spikes, 100, false);
    p.synaptic("stem1", Tensor::full({1, 1, 1, 2}, Real(3)), 50, true);
    p.multiplications("upsample", 7);
    p.multiplications("dec.bn", 5);
    const OpLedger L = ledger_from_profile(p);
    REQUIRE(L.layers.size() == 2);
    CHECK(L.layers[0].name == "enc");
    CHECK(L.layers[0].steps == 4);
    CHECK(L.layers[0].input_rate == doctest::Approx(0.375));
    CHECK(L.total_adds == doctest::Approx(0.375 * 4 * 100));
    CHECK(L.total_mults == doctest::Approx(50 + 7 + 5));
    CHECK(L.ann_macs == doctest::Approx(400 + 50));
    CHECK(L.mean_rate == doctest::Approx(0.375));
    CHECK(L.spiking_multiplications == 5);
    CHECK(L.energy_pj() == 0.9 * L.total_adds + 4.6 * L.total_mults);
    CHECK(L.ann_energy_pj() == 4.6 * L.ann_macs);
    std::ostringstream os;
    write_ledger(os, L);
    CHECK(os.str().find("enc") != std::string::npos);
  }

  TEST_CASE("count_ops requires a folded model") {
    const ToyDataset ds = tiny_dataset();
    SpikingEdn m(tiny_model());
    m.set_training(false);
    CHECK_THROWS_AS(count_ops(m, ds.test), StateError);
    m.fold();
    const OpLedger L = count_ops(m, ds.test);
    CHECK(L.spiking_multiplications == 0);
    CHECK(L.ann_macs - L.total_adds >= (1 - L.mean_rate) * L.ann_macs * (1 - 1e-12));
    CHECK(L.energy_pj() == 0.9 * L.total_adds + 4.6 * L.total_mults);
  }

  TEST_CASE("firing-rate histogram buckets every neuron once") {
    Profiler p;
    p.spikes("a", Tensor({1, 1, 1, 4}, {Real(1), Real(0), Real(0), Real(1)}));
    p.spikes("a", Tensor({1, 1, 1, 4}, {Real(1), Real(1), Real(0), Real(0)}));
    const FiringRateReport r = firing_rate_report(p);
    const LayerRates* a = r.find("a");
    REQUIRE(a != nullptr);
    CHECK(a->mean == doctest::Approx(0.5));
    // rates 1, 0.5, 0, 0.5
    CHECK(a->histogram.front() == 1);
    CHECK(a->histogram[a->histogram.size() - 1] == 3);
    std::uint64_t n = 0;
    for (auto c : a->histogram) n += c;
    CHECK(n == 4);
    CHECK(r.find("missing") == nullptr);
    std::ostringstream os;
    write_histogram_csv(os, r);
    CHECK(os.str().starts_with("layer,mean,bucket_lo,bucket_hi,count\n"));
    CHECK(mean_spike_rate(p) == doctest::Approx(0.5));
  }
}
