#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sedn/ops.hpp"
#include "support.hpp"

using namespace sedn;
using namespace testing;

TEST_SUITE("ops") {
  TEST_CASE("conv output extent matches a position count") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t in = 1 + rng() % 20, k = 1 + rng() % 5, s = 1 + rng() % 3, d = 1 + rng() % 3, p = rng() % 4;
      if (in + 2 * p < d * (k - 1) + 1) continue;
      std::size_t count = 0;
      for (std::size_t start = 0; start + d * (k - 1) < in + 2 * p; start += s) ++count;
      CHECK(conv_output_extent(in, k, ConvGeometry{s, d, p}) == count);
    }
  }

  TEST_CASE("conv2d agrees with the direct loop") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t B = 1 + rng() % 2, C = 1 + rng() % 4, O = 1 + rng() % 5;
      const std::size_t K = std::array<std::size_t, 3>{1, 3, 5}[rng() % 3];
      const std::size_t s = 1 + rng() % 2, d = 1 + rng() % 2, H = 5 + rng() % 8, W = 5 + rng() % 8;
      const std::size_t p = (K - 1) / 2 * d;
      const Tensor x = random_tensor({B, C, H, W}, rng);
      const Tensor w = random_tensor({O, C, K, K}, rng);
      std::size_t oh = 0, ow = 0;
      const auto ref = naive_conv(x, w, s, d, p, oh, ow);
      const Tensor y = conv2d(x, w, ConvGeometry{s, d, p});
      REQUIRE(y.shape() == Shape{B, O, oh, ow});
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-4));
    }
  }

  TEST_CASE("conv2d rejects mismatched channels") {
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), ConvGeometry{1, 1, 1}), ShapeError);
  }

  TEST_CASE("uniform scores give ln C") {
    for (std::size_t C : {2, 3, 7}) {
      const Tensor s = Tensor::zeros({2, C, 3, 3});
      std::vector<std::uint8_t> labels(18);
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(i % C);
      CHECK(pixel_cross_entropy(s, labels, 255).item() == doctest::Approx(std::log(double(C))).epsilon(1e-6));
    }
  }

  TEST_CASE("cross entropy matches a per-pixel summation") {
    std::mt19937_64 rng(5);
    const std::size_t B = 2, C = 4, H = 5, W = 3, hw = H * W;
    const Tensor s = random_tensor({B, C, H, W}, rng, -4, 4);
    std::vector<std::uint8_t> labels(B * hw);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % (C + 1));
    for (auto& l : labels) l = l == C ? 255 : l;
    double total = 0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::uint8_t l = labels[b * hw + i];
        if (l == 255) continue;
        double z = 0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(s[(b * C + c) * hw + i]));
        total += -(static_cast<double>(s[(b * C + l) * hw + i]) - std::log(z));
        ++n;
      }
    CHECK(pixel_cross_entropy(s, labels, 255).item() == doctest::Approx(total / n).epsilon(1e-6));
  }

  TEST_CASE("confident correct prediction drives the loss to zero") {
    Tensor s({1, 2, 1, 1}, {Real(40), Real(-40)});
    const std::vector<std::uint8_t> l{0};
    CHECK(pixel_cross_entropy(s, l, 255).item() < 1e-6);
  }

  TEST_CASE("cross entropy errors") {
    const Tensor s = Tensor::zeros({1, 3, 2, 2});
    CHECK_THROWS_AS(pixel_cross_entropy(s, std::vector<std::uint8_t>(4, 255), 255), DomainError);
    CHECK_THROWS_AS(pixel_cross_entropy(s, std::vector<std::uint8_t>(4, 3), 255), ShapeError);
    CHECK_THROWS_AS(pixel_cross_entropy(s, std::vector<std::uint8_t>(3, 0), 255), ShapeError);
  }

  TEST_CASE("batch norm normalizes and tracks statistics") {
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor({4, 3, 5, 5}, rng, 2, 6);
    Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, Real(1));
    const Tensor y = batch_norm(x, nullptr, nullptr, rm, rv, BatchNormOptions{});
    const std::size_t per = 25;
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0, v = 0, mx = 0, vx = 0;
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t i = 0; i < per; ++i) {
          const std::size_t idx = (b * 3 + c) * per + i;
          m += y[idx];
          mx += x[idx];
        }
      m /= 100;
      mx /= 100;
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t i = 0; i < per; ++i) {
          const std::size_t idx = (b * 3 + c) * per + i;
          v += (y[idx] - m) * (y[idx] - m);
          vx += (x[idx] - mx) * (x[idx] - mx);
        }
      CHECK(std::fabs(m) < 1e-5);
      CHECK(v / 100 == doctest::Approx(1).epsilon(1e-3));
      CHECK(rm[c] == doctest::Approx(0.1 * mx).epsilon(1e-5));
      CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * vx / 99).epsilon(1e-5));
    }
    BatchNormOptions infer;
    infer.training = false;
    const Tensor z = batch_norm(x, nullptr, nullptr, rm, rv, infer);
    CHECK(z[0] == doctest::Approx((x[0] - rm[0]) / std::sqrt(rv[0] + 1e-5)).epsilon(1e-5));
  }

  TEST_CASE("nearest upsampling replicates and keeps binary maps binary") {
    std::mt19937_64 rng(1);
    const Tensor s = random_spikes({1, 2, 3, 4}, rng, 0.5);
    const Tensor u = upsample(s, 3, UpsampleMode::nearest);
    REQUIRE(u.shape() == Shape{1, 2, 9, 12});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < 12; ++j) CHECK(u[(c * 9 + i) * 12 + j] == s[(c * 3 + i / 3) * 4 + j / 3]);
  }

  TEST_CASE("bilinear upsampling preserves constants and linear ramps in the interior") {
    const Tensor c = Tensor::full({1, 1, 3, 3}, Real(2.5));
    const Tensor u = upsample(c, 4, UpsampleMode::average);
    for (Real v : u.data()) CHECK(v == doctest::Approx(2.5));
    std::vector<Real> ramp(8);
    for (std::size_t j = 0; j < 8; ++j) ramp[j] = Real(j);
    const Tensor r = upsample(Tensor({1, 1, 1, 8}, ramp), 2, UpsampleMode::average);
    // Half-pixel centers: output j maps to (j + 0.5) / 2 - 0.5.
    for (std::size_t j = 1; j + 1 < 16; ++j) CHECK(r[j] == doctest::Approx((j + 0.5) / 2 - 0.5));
  }

  TEST_CASE("concat, pooling, broadcast and channel sums") {
    std::mt19937_64 rng(8);
    const Tensor a = random_tensor({2, 1, 2, 2}, rng), b = random_tensor({2, 3, 2, 2}, rng);
    const std::array<Tensor, 2> parts{a, b};
    const Tensor c = concat(parts);
    REQUIRE(c.shape() == Shape{2, 4, 2, 2});
    CHECK(c[4] == b[0]);
    CHECK(c[16] == a[4]);
    const Tensor g = global_avg_pool(b);
    CHECK(g[0] == doctest::Approx((b[0] + b[1] + b[2] + b[3]) / 4));
    const Tensor br = broadcast_spatial(g, 3, 2);
    REQUIRE(br.shape() == Shape{2, 3, 3, 2});
    CHECK(br[5] == g[0]);
    const Tensor s = channel_sum(b);
    CHECK(s[0] == doctest::Approx(b[0] + b[4] + b[8]));
  }

  TEST_CASE("softmax is positive and sums to one") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
      const Tensor z = random_tensor({1 + rng() % 6}, rng, -30, 30);
      const Tensor p = softmax(z);
      double s = 0;
      for (Real v : p.data()) {
        CHECK(v >= 0);
        s += v;
      }
      CHECK(std::fabs(s - 1) < 1e-6);
    }
  }

  TEST_CASE("tape runs rules in reverse and respects no-grad scopes") {
    Tensor x({3}, {Real(1), Real(2), Real(3)}, true);
    {
      Graph g;
      const Tensor y = sum(mul(x, x));
      g.backward(y);
    }
    CHECK(x.grad()[2] == doctest::Approx(6));
    x.zero_grad();
    {
      Graph g;
      NoGradScope ng;
      const Tensor y = sum(mul(x, x));
      CHECK(g.size() == 0);
      CHECK_FALSE(y.requires_grad());
    }
    const Tensor y = sum(x);
    CHECK_FALSE(y.requires_grad());
  }

  TEST_CASE("mse and scalar scaling") {
    Tensor a({2}, {Real(1), Real(3)}, true);
    const Tensor b({2}, {Real(0), Real(1)});
    CHECK(mse_loss(a, b).item() == doctest::Approx(2.5));
    Tensor s = Tensor::scalar(Real(2), true);
    Graph g;
    const Tensor y = sum(scale_by(a, s));
    g.backward(y);
    CHECK(s.grad()[0] == doctest::Approx(4));
    CHECK(a.grad()[1] == doctest::Approx(2));
  }
}
