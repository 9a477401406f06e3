#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>

#include "acceptance_checks.hpp"
#include "gradcheck.hpp"
#include "sedn/io.hpp"
#include "sedn/synth.hpp"
#include "sedn/train.hpp"

static_assert(sizeof(sedn::Real) == 8, "criteria 1 and 2 run in double precision");

namespace acceptance {

using namespace sedn;

namespace {

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

}  // namespace

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig c;
  c.stem_channels = 4;
  c.node_channels = 2;
  c.aspp_channels = 2;
  c.decoder_channels = 4;
  c.aspp_dilations = {1, 2};
  c.genotype = default_genotype({4, 8});
  c.placement = Placement::all;
  c.ailif_beta = 0.2;
  c.seed = 3;
  SpikingEdn m(c);
  m.set_training(true);

  std::mt19937_64 rng(21);
  SequenceBatch b;
  b.size = 2;
  for (int t = 0; t < 2; ++t) {
    Tensor ev = Tensor::zeros({2, 5, 16, 16});
    for (Real& v : ev.mutable_data()) v = static_cast<Real>(static_cast<int>(rng() % 4) - 1);
    b.events.push_back(ev);
    std::vector<std::uint8_t> l(2 * 16 * 16);
    for (auto& x : l) x = static_cast<std::uint8_t>(rng() % 3);
    b.labels.push_back(l);
  }
  constexpr std::size_t kCoords = 200;
  const testing::GradcheckReport r = testing::gradcheck(
      m.parameters(), [&] { return sequence_loss(m, b, SpikeFn::smooth); }, kCoords, 22, 1e-4, 1e-3, 1e-5);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.pass = r.failures == 0 && r.checked >= 100 && secs < 120;
  o.detail = format("%zu coordinates (%zu with |grad| > 1e-5), max rel err %.3g (< 1e-3, denominator floor 1e-5), %zu failures, %.1fs (< 120s); worst %s",
                    r.checked, r.nonzero, r.max_rel, r.failures, secs, r.worst.c_str());
  return o;
}

Outcome threshold_bound_suite() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0, 1);
  constexpr int kTrajectories = 10000, kSteps = 60;
  constexpr double kSlack = 1e-12;
  std::size_t violations = 0;
  double worst = 0;
  for (int n = 0; n < kTrajectories; ++n) {
    double tau_a = unit(rng);
    while (tau_a <= 0) tau_a = unit(rng);
    const double beta = unit(rng), u_th = 0.1 + unit(rng);
    NeuronConfig cfg = NeuronConfig::ailif(u_th, beta, tau_a);
    cfg.tau_a_min = std::min(tau_a, 0.5);
    cfg.tau_a_max = std::max(tau_a, 0.5);
    const ThresholdBound bound = adaptation_bound(cfg);
    // Alternate quiet, bursty and saturating drive so trajectories visit both ends.
    const double drive = n % 3 == 0 ? 5.0 : (n % 3 == 1 ? 1.5 : 0.8);
    NeuronState s;
    for (int t = 0; t < kSteps; ++t) {
      const Tensor cur({1}, {drive * unit(rng) - 0.2});
      s = lif_step(s, cur, cfg);
      const double th = effective_threshold(s, cfg)[0];
      if (th < bound.lo - kSlack || th > bound.hi + kSlack) ++violations;
      worst = std::max(worst, th - bound.hi);
    }
  }
  NeuronConfig paper = NeuronConfig::ailif(0.5, 0.07, 0.3);
  NeuronState s;
  double max_increment = 0;
  for (int t = 0; t < 500; ++t) {
    s = lif_step(s, Tensor({1}, {10.0}), paper);
    max_increment = std::max(max_increment, effective_threshold(s, paper)[0] - 0.5);
  }
  Outcome o;
  o.pass = violations == 0 && max_increment <= 0.1 + 1e-9;
  o.detail = format("%d trajectories x %d steps, %zu outside [u_th, u_th + beta/(1-tau_a)] (slack 1e-12), "
                    "max excess %.3g; saturated increment at (0.5, 0.07, 0.3) = %.12f (<= 0.1 + 1e-9)",
                    kTrajectories, kSteps, violations, worst, max_increment);
  return o;
}

FoldReport fold_difference(const ModelDump& dump, std::size_t train_scenes, std::size_t test_scenes,
                           std::uint64_t seed) {
  SpikingEdn m(model_config_from_entries(dump.config));
  TensorList mine = m.tensors();
  if (mine.size() != dump.tensors.size()) throw ShapeError("tensor count differs between precisions");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    const auto& [name, values] = dump.tensors[i];
    if (mine[i].name != name || mine[i].tensor->numel() != values.size())
      throw ShapeError("tensor " + name + " does not match " + mine[i].name);
    std::copy(values.begin(), values.end(), mine[i].tensor->mutable_data().begin());
  }
  m.set_training(false);
  SpikingEdn folded = m.clone();
  folded.fold();

  ToyDatasetOptions o;
  o.train_scenes = train_scenes;
  o.test_scenes = test_scenes;
  o.seed = seed;
  const ToyDataset ds = make_toy_dataset(o);
  NoGradScope ng;
  FoldReport r;
  for (std::size_t i = 0; i < ds.test.size(); i += 8) {
    std::vector<const StackSequence*> ptrs;
    for (std::size_t j = i; j < std::min(ds.test.size(), i + 8); ++j) ptrs.push_back(&ds.test[j]);
    const SequenceBatch batch = make_batch(ptrs);
    ModelState sa = m.initial_state(), sb = folded.initial_state();
    for (std::size_t t = 0; t < batch.events.size(); ++t) {
      const Tensor* aug = batch.aug.empty() ? nullptr : &batch.aug[t];
      const Tensor ya = m.forward_step(batch.events[t], aug, sa), yb = folded.forward_step(batch.events[t], aug, sb);
      for (std::size_t k = 0; k < ya.numel(); ++k) r.max_diff = std::max(r.max_diff, std::fabs(ya[k] - yb[k]));
      ++r.steps;
    }
  }
  return r;
}

}  // namespace acceptance
