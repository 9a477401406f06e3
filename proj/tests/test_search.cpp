#include <array>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "sedn/log.hpp"
#include "sedn/search.hpp"
#include "sedn/synth.hpp"
#include "support.hpp"

using namespace sedn;
using namespace testing;

namespace {

struct Best {
  double log_weight = -INFINITY;
  std::vector<std::size_t> path;
};

// Enumerates every level sequence that starts next to level 0 and moves at
// most one level per layer.
Best exhaustive(const TransitionWeights& tw) {
  Best best;
  std::vector<std::size_t> cur;
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t layer, std::size_t from, double lw) {
    if (layer == tw.layers) {
      if (lw > best.log_weight) best = {lw, cur};
      return;
    }
    for (std::size_t to = 0; to < tw.levels; ++to) {
      if (to + 1 < from || to > from + 1) continue;
      const double w = tw.at(layer, from, to);
      if (w <= 0) continue;
      cur.push_back(to);
      rec(layer + 1, to, lw + std::log(w));
      cur.pop_back();
    }
  };
  rec(0, 0, 0.0);
  return best;
}

TransitionWeights random_transitions(std::size_t layers, std::mt19937_64& rng) {
  TransitionWeights tw(layers, kLevelFactors.size());
  std::uniform_real_distribution<double> d(0.01, 1);
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t j = 0; j < tw.levels; ++j) {
      const auto moves = tw.moves(j);
      double z = 0;
      std::vector<double> v(moves.size());
      for (double& x : v) z += x = d(rng);
      for (std::size_t m = 0; m < moves.size(); ++m) tw.at(l, j, moves[m]) = v[m] / z;
    }
  return tw;
}

ArchWeights random_arch(std::mt19937_64& rng) {
  ArchWeights a;
  a.candidates.assign(kAllEdgeOps.begin(), kAllEdgeOps.end());
  std::normal_distribution<double> d(0, 1);
  for (std::size_t e = 0; e < cell_edge_slots().size(); ++e) {
    std::vector<double> row(3);
    for (double& x : row) x = d(rng);
    a.edge_alphas.push_back(row);
  }
  a.transitions = random_transitions(4, rng);
  return a;
}

}  // namespace

TEST_SUITE("search") {
  TEST_CASE("mixed edge weights candidate outputs by softmax") {
    const Tensor a({3}, {Real(0), Real(std::log(2.0)), Real(std::log(3.0))});
    const std::array<Tensor, 3> outs{Tensor::full({2}, Real(6)), Tensor::full({2}, Real(12)), Tensor::full({2}, Real(0))};
    const Tensor y = mixed_edge_forward(a, outs);
    // weights 1/6, 2/6, 3/6
    CHECK(y[0] == doctest::Approx(1 + 4));
    const Tensor eq = Tensor::zeros({3});
    CHECK(mixed_edge_forward(eq, outs)[1] == doctest::Approx(6));
  }

  TEST_CASE("alpha gradient of a mixed edge matches the softmax Jacobian") {
    Tensor a({2}, {Real(0.3), Real(-0.2)}, true);
    const std::array<Tensor, 2> outs{Tensor::full({1}, Real(1)), Tensor::full({1}, Real(3))};
    Graph g;
    const Tensor y = sum(mixed_edge_forward(a, outs));
    g.backward(y);
    const double p0 = 1 / (1 + std::exp(-0.5));
    // dy/da0 = p0 (o0 - y)
    const double yv = p0 * 1 + (1 - p0) * 3;
    CHECK(a.grad()[0] == doctest::Approx(p0 * (1 - yv)).epsilon(1e-5));
    CHECK(a.grad()[1] == doctest::Approx((1 - p0) * (3 - yv)).epsilon(1e-5));
  }

  TEST_CASE("canonical edge order is node-major") {
    const auto s = cell_edge_slots();
    REQUIRE(s.size() == 9);
    CHECK(s[0] == std::pair<std::size_t, std::size_t>{0, 0});
    CHECK(s[2] == std::pair<std::size_t, std::size_t>{1, 0});
    CHECK(s[8] == std::pair<std::size_t, std::size_t>{2, 3});
  }

  TEST_CASE("trellis decoding equals exhaustive enumeration") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t layers = 1 + rng() % 6;
      const TransitionWeights tw = random_transitions(layers, rng);
      const TrellisPath p = decode_trellis(tw);
      const Best b = exhaustive(tw);
      CHECK(p.levels == b.path);
      CHECK(p.log_weight == doctest::Approx(b.log_weight).epsilon(1e-12));
    }
  }

  TEST_CASE("trellis ties prefer the lower level") {
    TransitionWeights tw(4, 4);
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k : tw.moves(j)) tw.at(l, j, k) = 1;
    CHECK(decode_trellis(tw).levels == std::vector<std::size_t>{0, 0, 0, 0});
    CHECK_THROWS_AS(tw.at(0, 0, 2) = 1, ShapeError);
  }

  TEST_CASE("extraction is invariant to logit shifts and positive scaling") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const ArchWeights a = random_arch(rng);
      ArchWeights b = a;
      for (auto& row : b.edge_alphas)
        for (double& x : row) x = 2.5 * x + 7;
      const Genotype ga = extract_genotype(a, 1, 2), gb = extract_genotype(b, 1, 2);
      CHECK(ga == gb);
      REQUIRE(ga.cells.size() == 4);
      CHECK(ga.cells[0].size() == 9);
      for (std::size_t e = 0; e < 9; ++e) {
        const auto& row = a.edge_alphas[e];
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        CHECK(ga.cells[2][e].op == a.candidates[best]);
      }
      const TrellisPath p = decode_trellis(a.transitions);
      for (std::size_t l = 0; l < 4; ++l) CHECK(ga.path[l] == kLevelFactors[p.levels[l]]);
    }
  }

  TEST_CASE("ties resolve to the lowest index with a warning") {
    std::mt19937_64 rng(6);
    ArchWeights a = random_arch(rng);
    a.edge_alphas[4] = {0.5, 0.5, 0.1};
    std::vector<std::string> seen;
    const WarningSink prev = set_warning_sink([&](std::string_view m) { seen.emplace_back(m); });
    const Genotype g1 = extract_genotype(a), g2 = extract_genotype(a);
    set_warning_sink(prev);
    CHECK(g1 == g2);
    CHECK(g1.cells[0][4].op == EdgeOp::skip);
    CHECK(seen.size() == 2);
  }

  TEST_CASE("conv weight grows monotonically when conv reproduces the target") {
    EdgeRegressionTask task(3, 8, 4);
    std::copy(task.target_kernel().data().begin(), task.target_kernel().data().end(),
              task.edge().op(1).weight().mutable_data().begin());
    AdamOptions o;
    o.lr = 0.05;
    Adam arch(task.arch_parameters(), o);
    double last = task.weights()[1];
    CHECK(last == doctest::Approx(0.5));
    for (int step = 0; step < 40; ++step) {
      const auto b = task.sample(2);
      const BilevelLosses l = bilevel_step(task, b, b, nullptr, &arch);
      CHECK(std::isfinite(l.val));
      const double w = task.weights()[1];
      CHECK(w >= last);
      last = w;
    }
    CHECK(last > 0.9);
  }

  TEST_CASE("empty splits are rejected") {
    EdgeRegressionTask task(2, 4, 1);
    const auto b = task.sample(1);
    EdgeRegressionTask::Batch empty;
    CHECK_THROWS_AS(bilevel_step(task, b, empty, nullptr, nullptr), DomainError);
    CHECK_THROWS_AS(bilevel_step(task, empty, b, nullptr, nullptr), DomainError);
  }

  TEST_CASE("supernet search produces a valid genotype") {
    ToyDatasetOptions o;
    o.train_scenes = 2;
    o.test_scenes = 0;
    o.scene.width = 32;
    o.scene.height = 32;
    o.scene.duration_us = 400'000;
    o.scene.min_size = 8;
    o.scene.max_size = 14;
    const ToyDataset ds = make_toy_dataset(o);
    REQUIRE(ds.train.size() == 4);
    ModelConfig base;
    base.stem_channels = 8;
    base.node_channels = 4;
    base.decoder_channels = 8;
    SearchConfig sc;
    sc.layers = 3;
    sc.epochs = 2;
    sc.warmup_epochs = 1;
    sc.batch_size = 2;
    SuperNet net(base, sc);
    CHECK(net.arch_parameters().size() == 9 + 1 + 2 + 3);
    std::vector<SearchEpoch> seen;
    const std::span<const StackSequence> all(ds.train);
    const SearchResult r = run_search(net, all.first(2), all.last(2), sc, [&](const SearchEpoch& e) { seen.push_back(e); });
    REQUIRE(seen.size() == 2);
    CHECK(seen[0].warmup);
    CHECK_FALSE(seen[1].warmup);
    CHECK(std::isfinite(seen[1].val_loss));
    CHECK(r.genotype.layers() == 3);
    CHECK_NOTHROW(r.genotype.validate());
    CHECK(r.genotype.path[0] <= 8);
    double s = 0;
    for (double w : net.edge_weights(0)) s += w;
    CHECK(s == doctest::Approx(1));
    CHECK_THROWS_AS(run_search(net, all.first(0), all, sc), DomainError);
  }
}
