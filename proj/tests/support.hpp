#pragma once

// Shared helpers for the test binaries: random tensors and independent
// reference implementations used as oracles.

#include <cmath>
#include <random>
#include <vector>

#include "sedn/ops.hpp"

namespace testing {

using sedn::Real;
using sedn::Shape;
using sedn::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(sedn::shape_numel(shape));
  for (Real& x : v) x = static_cast<Real>(d(rng));
  return Tensor(shape, std::move(v), requires_grad);
}

inline Tensor random_spikes(const Shape& shape, std::mt19937_64& rng, double p) {
  std::bernoulli_distribution d(p);
  std::vector<Real> v(sedn::shape_numel(shape));
  for (Real& x : v) x = d(rng) ? Real(1) : Real(0);
  return Tensor(shape, std::move(v));
}

/// Direct seven-loop convolution with zero padding, in double precision.
/// `taps` counts every multiply-accumulate visited, padded positions included.
inline std::vector<double> naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t dilation,
                                      std::size_t pad, std::size_t& oh, std::size_t& ow, std::uint64_t* taps = nullptr) {
  const std::size_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const std::size_t O = w.size(0), K = w.size(2);
  const long span = static_cast<long>(dilation * (K - 1));
  oh = (H + 2 * pad - span - 1) / stride + 1;
  ow = (W + 2 * pad - span - 1) / stride + 1;
  std::vector<double> out(B * O * oh * ow, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                if (taps && b == 0) ++*taps;
                const long y = static_cast<long>(i * stride + ki * dilation) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + kj * dilation) - static_cast<long>(pad);
                if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                acc += static_cast<double>(x.ptr()[((b * C + c) * H + y) * W + xx]) *
                       static_cast<double>(w.ptr()[((o * C + c) * K + ki) * K + kj]);
              }
          out[((b * O + o) * oh + i) * ow + j] = acc;
        }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace testing
