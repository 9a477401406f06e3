#include "sedn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sedn/simd.hpp"

SEDN_BEGIN_NAMESPACE

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined() || t.dim() != rank) {
    throw ShapeError(std::string(op) + ": expected a rank-" + std::to_string(rank) + " tensor, got " +
                     (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <class F>
void record(F&& rule) {
  Graph::active()->record(std::forward<F>(rule));
}

struct Dims4 {
  std::size_t b, c, h, w;
};

Dims4 dims4(const Tensor& t) { return {t.size(0), t.size(1), t.size(2), t.size(3)}; }

// Unfolds one image [C, H, W] into columns [C*k*k, Hout*Wout].
void im2col(const Real* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            const ConvGeometry& g, std::size_t hout, std::size_t wout, Real* col) {
  const std::size_t hw = hout * wout;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        Real* row = col + ((c * k + ki) * k + kj) * hw;
        const std::ptrdiff_t off_y = static_cast<std::ptrdiff_t>(ki * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
        const std::ptrdiff_t off_x = static_cast<std::ptrdiff_t>(kj * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
        for (std::size_t oy = 0; oy < hout; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride) + off_y;
          Real* dst = row + oy * wout;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wout, Real(0));
            continue;
          }
          const Real* src = img + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wout; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride) + off_x;
            dst[ox] = (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) ? src[ix] : Real(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into an image gradient.
void col2im(const Real* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            const ConvGeometry& g, std::size_t hout, std::size_t wout, Real* img) {
  const std::size_t hw = hout * wout;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const Real* row = col + ((c * k + ki) * k + kj) * hw;
        const std::ptrdiff_t off_y = static_cast<std::ptrdiff_t>(ki * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
        const std::ptrdiff_t off_x = static_cast<std::ptrdiff_t>(kj * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
        for (std::size_t oy = 0; oy < hout; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride) + off_y;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          Real* dst = img + (c * h + static_cast<std::size_t>(iy)) * w;
          const Real* src = row + oy * wout;
          for (std::size_t ox = 0; ox < wout; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride) + off_x;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(std::size_t k, const ConvGeometry& g) { return k == 1 && g.stride == 1 && g.padding == 0; }

void accumulate(std::vector<Real>& dst, std::span<const Real> src) {
  simd::axpy(src.size(), Real(1), src.data(), dst.data());
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g) {
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(in + 2 * g.padding) -
                              static_cast<std::ptrdiff_t>(g.dilation * (kernel - 1)) - 1;
  if (span < 0 || g.stride == 0) {
    throw ShapeError("convolution window larger than padded input (extent " + std::to_string(in) + ", kernel " +
                     std::to_string(kernel) + ")");
  }
  return static_cast<std::size_t>(span) / g.stride + 1;
}

std::size_t same_padding(std::size_t kernel, std::size_t dilation) { return dilation * (kernel - 1) / 2; }

Tensor conv2d(const Tensor& input, const Tensor& weight, const ConvGeometry& g) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const auto [nb, cin, h, w] = dims4(input);
  const std::size_t cout = weight.size(0);
  const std::size_t k = weight.size(2);
  if (weight.size(1) != cin) {
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels but weight " +
                     shape_string(weight.shape()) + " expects " + std::to_string(weight.size(1)));
  }
  if (weight.size(3) != k || k == 0) throw ShapeError("conv2d: kernel must be square, got " + shape_string(weight.shape()));
  if (g.dilation == 0 || g.stride == 0) throw ShapeError("conv2d: stride and dilation must be >= 1");
  const std::size_t hout = conv_output_extent(h, k, g);
  const std::size_t wout = conv_output_extent(w, k, g);
  const std::size_t ck = cin * k * k;
  const std::size_t hw = hout * wout;
  const bool pointwise = is_pointwise(k, g);

  std::vector<Real> out(nb * cout * hw, Real(0));
  std::vector<Real> col(pointwise ? 0 : ck * hw);
  for (std::size_t b = 0; b < nb; ++b) {
    const Real* img = input.ptr() + b * cin * h * w;
    const Real* cols = img;
    if (!pointwise) {
      im2col(img, cin, h, w, k, g, hout, wout, col.data());
      cols = col.data();
    }
    simd::gemm_nn(cout, hw, ck, weight.ptr(), ck, cols, hw, out.data() + b * cout * hw, hw);
  }

  const bool track = detail::should_record({&input, &weight});
  Tensor result = detail::make_result({nb, cout, hout, wout}, std::move(out), track);
  if (track) {
    record([x = input.impl(), wt = weight.impl(), y = result.impl(), g, nb, cin, h, w, cout, k, hout, wout]() {
      if (y->grad.empty()) return;
      const std::size_t ck = cin * k * k;
      const std::size_t hw = hout * wout;
      const bool pointwise = is_pointwise(k, g);
      std::vector<Real> col(pointwise ? 0 : ck * hw);
      if (wt->requires_grad) {
        wt->ensure_grad();
        for (std::size_t b = 0; b < nb; ++b) {
          const Real* img = x->data.data() + b * cin * h * w;
          const Real* cols = img;
          if (!pointwise) {
            im2col(img, cin, h, w, k, g, hout, wout, col.data());
            cols = col.data();
          }
          simd::gemm_nt(cout, ck, hw, y->grad.data() + b * cout * hw, hw, cols, hw, wt->grad.data(), ck);
        }
      }
      if (x->requires_grad) {
        x->ensure_grad();
        std::vector<Real> dcol(ck * hw);
        for (std::size_t b = 0; b < nb; ++b) {
          Real* gimg = x->grad.data() + b * cin * h * w;
          if (pointwise) {
            simd::gemm_tn(ck, hw, cout, wt->data.data(), ck, y->grad.data() + b * cout * hw, hw, gimg, hw);
          } else {
            std::fill(dcol.begin(), dcol.end(), Real(0));
            simd::gemm_tn(ck, hw, cout, wt->data.data(), ck, y->grad.data() + b * cout * hw, hw, dcol.data(), hw);
            col2im(dcol.data(), cin, h, w, k, g, hout, wout, gimg);
          }
        }
      }
    });
  }
  return result;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 4, "add_channel_bias");
  const auto [nb, c, h, w] = dims4(x);
  if (bias.numel() != c) {
    throw ShapeError("add_channel_bias: " + std::to_string(c) + " channels but bias " + shape_string(bias.shape()));
  }
  const std::size_t hw = h * w;
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      Real* p = out.data() + (b * c + ch) * hw;
      const Real v = bias[ch];
      for (std::size_t i = 0; i < hw; ++i) p[i] += v;
    }
  const bool track = detail::should_record({&x, &bias});
  Tensor result = detail::make_result(x.shape(), std::move(out), track);
  if (track) {
    record([xi = x.impl(), bi = bias.impl(), y = result.impl(), nb, c, hw]() {
      if (y->grad.empty()) return;
      if (xi->requires_grad) {
        xi->ensure_grad();
        accumulate(xi->grad, y->grad);
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const Real* g = y->grad.data() + (b * c + ch) * hw;
            Real s = 0;
            for (std::size_t i = 0; i < hw; ++i) s += g[i];
            bi->grad[ch] += s;
          }
      }
    });
  }
  return result;
}

Tensor batch_norm(const Tensor& x, const Tensor* gamma, const Tensor* beta, Tensor& running_mean, Tensor& running_var,
                  const BatchNormOptions& opt) {
  require_rank(x, 4, "batch_norm");
  const auto [nb, c, h, w] = dims4(x);
  auto check_vec = [&](const Tensor* t, const char* what) {
    if (t != nullptr && t->numel() != c) {
      throw ShapeError(std::string("batch_norm: input has ") + std::to_string(c) + " channels but " + what +
                       " has shape " + shape_string(t->shape()));
    }
  };
  check_vec(gamma, "gamma");
  check_vec(beta, "beta");
  check_vec(&running_mean, "running mean");
  check_vec(&running_var, "running variance");
  if (!(opt.eps > 0)) throw DomainError("batch_norm: eps must be positive");

  const std::size_t hw = h * w;
  const std::size_t count = nb * hw;
  std::vector<Real> mean_c(c), inv_std(c);
  if (opt.training) {
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, s2 = 0;
      for (std::size_t b = 0; b < nb; ++b) {
        const Real* p = x.ptr() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      for (std::size_t b = 0; b < nb; ++b) {
        const Real* p = x.ptr() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - m;
          s2 += d * d;
        }
      }
      const double var = s2 / static_cast<double>(count);
      mean_c[ch] = static_cast<Real>(m);
      inv_std[ch] = static_cast<Real>(1.0 / std::sqrt(var + opt.eps));
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      rm[ch] = static_cast<Real>((1.0 - opt.momentum) * rm[ch] + opt.momentum * m);
      rv[ch] = static_cast<Real>((1.0 - opt.momentum) * rv[ch] + opt.momentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean_c[ch] = running_mean[ch];
      inv_std[ch] = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + opt.eps));
    }
  }

  std::vector<Real> xhat(x.numel());
  std::vector<Real> out(x.numel());
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * hw;
      const Real gm = gamma ? (*gamma)[ch] : Real(1);
      const Real bt = beta ? (*beta)[ch] : Real(0);
      for (std::size_t i = 0; i < hw; ++i) {
        const Real xh = (x[base + i] - mean_c[ch]) * inv_std[ch];
        xhat[base + i] = xh;
        out[base + i] = gm * xh + bt;
      }
    }

  const bool track = detail::should_record({&x, gamma, beta});
  Tensor result = detail::make_result(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr gi = gamma ? gamma->impl() : nullptr;
    ImplPtr bi = beta ? beta->impl() : nullptr;
    record([xi = x.impl(), gi, bi, y = result.impl(), xhat = std::move(xhat), inv_std = std::move(inv_std), nb, c,
            hw, training = opt.training]() {
      if (y->grad.empty()) return;
      const std::size_t count = nb * hw;
      const std::vector<Real>& gy = y->grad;
      if (gi && gi->requires_grad) gi->ensure_grad();
      if (bi && bi->requires_grad) bi->ensure_grad();
      if (xi->requires_grad) xi->ensure_grad();
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum_gy = 0, sum_gy_xh = 0;
        for (std::size_t b = 0; b < nb; ++b) {
          const std::size_t base = (b * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            sum_gy += gy[base + i];
            sum_gy_xh += gy[base + i] * xhat[base + i];
          }
        }
        if (gi && gi->requires_grad) gi->grad[ch] += static_cast<Real>(sum_gy_xh);
        if (bi && bi->requires_grad) bi->grad[ch] += static_cast<Real>(sum_gy);
        if (!xi->requires_grad) continue;
        const Real gm = gi ? gi->data[ch] : Real(1);
        const Real scale = gm * inv_std[ch];
        if (training) {
          const double mg = sum_gy / static_cast<double>(count);
          const double mgx = sum_gy_xh / static_cast<double>(count);
          for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              xi->grad[base + i] += static_cast<Real>(scale * (gy[base + i] - mg - xhat[base + i] * mgx));
            }
          }
        } else {
          for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) xi->grad[base + i] += scale * gy[base + i];
          }
        }
      }
    });
  }
  return result;
}

namespace {

// Source coordinate and blend weight for half-pixel-centered bilinear scaling.
struct Tap {
  std::size_t i0, i1;
  Real w0, w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t d = 0; d < taps.size(); ++d) {
    double src = (static_cast<double>(d) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0) src = 0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - static_cast<double>(i0);
    taps[d] = {i0, i1, static_cast<Real>(1.0 - l1), static_cast<Real>(l1)};
  }
  return taps;
}

}  // namespace

Tensor upsample(const Tensor& x, std::size_t factor, UpsampleMode mode) {
  require_rank(x, 4, "upsample");
  if (factor < 1) throw ShapeError("upsample: factor must be >= 1");
  const auto [nb, c, h, w] = dims4(x);
  const std::size_t ho = h * factor, wo = w * factor;
  std::vector<Real> out(nb * c * ho * wo);
  const std::size_t planes = nb * c;
  if (mode == UpsampleMode::nearest) {
    for (std::size_t p = 0; p < planes; ++p) {
      const Real* src = x.ptr() + p * h * w;
      Real* dst = out.data() + p * ho * wo;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = src[(oy / factor) * w + ox / factor];
    }
  } else {
    const auto ty = bilinear_taps(h, factor);
    const auto tx = bilinear_taps(w, factor);
    for (std::size_t p = 0; p < planes; ++p) {
      const Real* src = x.ptr() + p * h * w;
      Real* dst = out.data() + p * ho * wo;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const Tap& a = ty[oy];
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const Tap& b = tx[ox];
          dst[oy * wo + ox] = a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
                              a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]);
        }
      }
    }
  }
  const bool track = detail::should_record({&x});
  Tensor result = detail::make_result({nb, c, ho, wo}, std::move(out), track);
  if (track) {
    record([xi = x.impl(), y = result.impl(), planes, h, w, factor, mode]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      const std::size_t ho = h * factor, wo = w * factor;
      if (mode == UpsampleMode::nearest) {
        for (std::size_t p = 0; p < planes; ++p) {
          const Real* g = y->grad.data() + p * ho * wo;
          Real* gx = xi->grad.data() + p * h * w;
          for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) gx[(oy / factor) * w + ox / factor] += g[oy * wo + ox];
        }
      } else {
        const auto ty = bilinear_taps(h, factor);
        const auto tx = bilinear_taps(w, factor);
        for (std::size_t p = 0; p < planes; ++p) {
          const Real* g = y->grad.data() + p * ho * wo;
          Real* gx = xi->grad.data() + p * h * w;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const Tap& a = ty[oy];
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const Tap& b = tx[ox];
              const Real gv = g[oy * wo + ox];
              gx[a.i0 * w + b.i0] += a.w0 * b.w0 * gv;
              gx[a.i0 * w + b.i1] += a.w0 * b.w1 * gv;
              gx[a.i1 * w + b.i0] += a.w1 * b.w0 * gv;
              gx[a.i1 * w + b.i1] += a.w1 * b.w1 * gv;
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor concat(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  for (const Tensor& t : inputs) require_rank(t, 4, "concat");
  const std::size_t nb = inputs[0].size(0), h = inputs[0].size(2), w = inputs[0].size(3);
  std::size_t ctotal = 0;
  for (const Tensor& t : inputs) {
    if (t.size(0) != nb || t.size(2) != h || t.size(3) != w) {
      throw ShapeError("concat: non-channel extents differ (" + shape_string(inputs[0].shape()) + " vs " +
                       shape_string(t.shape()) + ")");
    }
    ctotal += t.size(1);
  }
  const std::size_t hw = h * w;
  std::vector<Real> out(nb * ctotal * hw);
  for (std::size_t b = 0; b < nb; ++b) {
    std::size_t coff = 0;
    for (const Tensor& t : inputs) {
      const std::size_t c = t.size(1);
      std::copy_n(t.ptr() + b * c * hw, c * hw, out.data() + (b * ctotal + coff) * hw);
      coff += c;
    }
  }
  const bool track = detail::should_record(inputs);
  Tensor result = detail::make_result({nb, ctotal, h, w}, std::move(out), track);
  if (track) {
    std::vector<ImplPtr> parts;
    for (const Tensor& t : inputs) parts.push_back(t.impl());
    record([parts = std::move(parts), y = result.impl(), nb, ctotal, hw]() {
      if (y->grad.empty()) return;
      for (std::size_t b = 0; b < nb; ++b) {
        std::size_t coff = 0;
        for (const ImplPtr& p : parts) {
          const std::size_t c = p->shape[1];
          if (p->requires_grad) {
            p->ensure_grad();
            simd::axpy(c * hw, Real(1), y->grad.data() + (b * ctotal + coff) * hw, p->grad.data() + b * c * hw);
          }
          coff += c;
        }
      }
    });
  }
  return result;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const auto [nb, c, h, w] = dims4(x);
  const std::size_t hw = h * w;
  std::vector<Real> out(nb * c);
  for (std::size_t p = 0; p < nb * c; ++p) {
    double s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += x[p * hw + i];
    out[p] = static_cast<Real>(s / static_cast<double>(hw));
  }
  const bool track = detail::should_record({&x});
  Tensor result = detail::make_result({nb, c, 1, 1}, std::move(out), track);
  if (track) {
    record([xi = x.impl(), y = result.impl(), hw]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      const Real inv = Real(1) / static_cast<Real>(hw);
      for (std::size_t p = 0; p < y->grad.size(); ++p) {
        const Real g = y->grad[p] * inv;
        for (std::size_t i = 0; i < hw; ++i) xi->grad[p * hw + i] += g;
      }
    });
  }
  return result;
}

Tensor broadcast_spatial(const Tensor& x, std::size_t h, std::size_t w) {
  require_rank(x, 4, "broadcast_spatial");
  if (x.size(2) != 1 || x.size(3) != 1) throw ShapeError("broadcast_spatial needs a 1x1 map, got " + shape_string(x.shape()));
  const std::size_t planes = x.size(0) * x.size(1);
  const std::size_t hw = h * w;
  std::vector<Real> out(planes * hw);
  for (std::size_t p = 0; p < planes; ++p) std::fill_n(out.data() + p * hw, hw, x[p]);
  const bool track = detail::should_record({&x});
  Tensor result = detail::make_result({x.size(0), x.size(1), h, w}, std::move(out), track);
  if (track) {
    record([xi = x.impl(), y = result.impl(), planes, hw]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      for (std::size_t p = 0; p < planes; ++p) {
        Real s = 0;
        for (std::size_t i = 0; i < hw; ++i) s += y->grad[p * hw + i];
        xi->grad[p] += s;
      }
    });
  }
  return result;
}

Tensor channel_sum(const Tensor& x) {
  require_rank(x, 4, "channel_sum");
  const auto [nb, c, h, w] = dims4(x);
  const std::size_t hw = h * w;
  std::vector<Real> out(nb * hw, Real(0));
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) simd::axpy(hw, Real(1), x.ptr() + (b * c + ch) * hw, out.data() + b * hw);
  const bool track = detail::should_record({&x});
  Tensor result = detail::make_result({nb, 1, h, w}, std::move(out), track);
  if (track) {
    record([xi = x.impl(), y = result.impl(), nb, c, hw]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
          simd::axpy(hw, Real(1), y->grad.data() + b * hw, xi->grad.data() + (b * c + ch) * hw);
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.numel());
  simd::add(out.size(), a.ptr(), b.ptr(), out.data());
  const bool track = detail::should_record({&a, &b});
  Tensor result = detail::make_result(a.shape(), std::move(out), track);
  if (track) {
    record([ai = a.impl(), bi = b.impl(), y = result.impl()]() {
      if (y->grad.empty()) return;
      for (const ImplPtr& p : {ai, bi}) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        accumulate(p->grad, y->grad);
      }
    });
  }
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  const bool track = detail::should_record({&a, &b});
  Tensor result = detail::make_result(a.shape(), std::move(out), track);
  if (track) {
    record([ai = a.impl(), bi = b.impl(), y = result.impl()]() {
      if (y->grad.empty()) return;
      if (ai->requires_grad) {
        ai->ensure_grad();
        accumulate(ai->grad, y->grad);
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        simd::axpy(y->grad.size(), Real(-1), y->grad.data(), bi->grad.data());
      }
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.numel());
  simd::mul(out.size(), a.ptr(), b.ptr(), out.data());
  const bool track = detail::should_record({&a, &b});
  Tensor result = detail::make_result(a.shape(), std::move(out), track);
  if (track) {
    record([ai = a.impl(), bi = b.impl(), y = result.impl()]() {
      if (y->grad.empty()) return;
      const std::size_t n = y->grad.size();
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += y->grad[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bi->grad[i] += y->grad[i] * ai->data[i];
      }
    });
  }
  return result;
}

Tensor add_n(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw ShapeError("add_n: no inputs");
  for (const Tensor& t : inputs) require_same_shape(inputs[0], t, "add_n");
  std::vector<Real> out(inputs[0].data().begin(), inputs[0].data().end());
  for (std::size_t k = 1; k < inputs.size(); ++k) simd::axpy(out.size(), Real(1), inputs[k].ptr(), out.data());
  const bool track = detail::should_record(inputs);
  Tensor result = detail::make_result(inputs[0].shape(), std::move(out), track);
  if (track) {
    std::vector<ImplPtr> parts;
    for (const Tensor& t : inputs) parts.push_back(t.impl());
    record([parts = std::move(parts), y = result.impl()]() {
      if (y->grad.empty()) return;
      for (const ImplPtr& p : parts) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        accumulate(p->grad, y->grad);
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& x, Real factor) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  const bool track = detail::should_record({&x});
  Tensor result = detail::make_result(x.shape(), std::move(out), track);
  if (track) {
    record([xi = x.impl(), y = result.impl(), factor]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      simd::axpy(y->grad.size(), factor, y->grad.data(), xi->grad.data());
    });
  }
  return result;
}

Tensor add_scalar(const Tensor& x, Real offset) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + offset;
  const bool track = detail::should_record({&x});
  Tensor result = detail::make_result(x.shape(), std::move(out), track);
  if (track) {
    record([xi = x.impl(), y = result.impl()]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      accumulate(xi->grad, y->grad);
    });
  }
  return result;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("scale_by: factor must hold one element, got " + shape_string(s.shape()));
  const Real f = s[0];
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * f;
  const bool track = detail::should_record({&x, &s});
  Tensor result = detail::make_result(x.shape(), std::move(out), track);
  if (track) {
    record([xi = x.impl(), si = s.impl(), y = result.impl()]() {
      if (y->grad.empty()) return;
      if (xi->requires_grad) {
        xi->ensure_grad();
        simd::axpy(y->grad.size(), si->data[0], y->grad.data(), xi->grad.data());
      }
      if (si->requires_grad) {
        si->ensure_grad();
        si->grad[0] += simd::dot(y->grad.size(), y->grad.data(), xi->data.data());
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double s = 0;
  for (Real v : x.data()) s += v;
  const bool track = detail::should_record({&x});
  Tensor result = detail::make_result({1}, {static_cast<Real>(s)}, track);
  if (track) {
    record([xi = x.impl(), y = result.impl()]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      const Real g = y->grad[0];
      for (Real& v : xi->grad) v += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

Tensor softmax(const Tensor& logits) {
  if (logits.dim() != 1 || logits.numel() == 0) {
    throw ShapeError("softmax: expected a non-empty 1-D tensor, got " + shape_string(logits.shape()));
  }
  const std::size_t n = logits.numel();
  Real mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  std::vector<Real> out(n);
  double z = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<Real>(std::exp(static_cast<double>(logits[i] - mx)));
    z += out[i];
  }
  for (Real& v : out) v = static_cast<Real>(v / z);
  const bool track = detail::should_record({&logits});
  Tensor result = detail::make_result({n}, std::move(out), track);
  if (track) {
    record([xi = logits.impl(), y = result.impl()]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      double dotp = 0;
      for (std::size_t i = 0; i < y->data.size(); ++i) dotp += y->grad[i] * y->data[i];
      for (std::size_t i = 0; i < y->data.size(); ++i)
        xi->grad[i] += static_cast<Real>(y->data[i] * (y->grad[i] - dotp));
    });
  }
  return result;
}

Tensor select(const Tensor& x, std::size_t i) {
  if (i >= x.numel()) throw ShapeError("select: index " + std::to_string(i) + " out of range");
  const bool track = detail::should_record({&x});
  Tensor result = detail::make_result({1}, {x[i]}, track);
  if (track) {
    record([xi = x.impl(), y = result.impl(), i]() {
      if (y->grad.empty()) return;
      xi->ensure_grad();
      xi->grad[i] += y->grad[0];
    });
  }
  return result;
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  const Tensor d = sub(prediction, target);
  return mean(mul(d, d));
}

Tensor pixel_cross_entropy(const Tensor& scores, std::span<const std::uint8_t> labels, std::uint8_t ignore_label) {
  require_rank(scores, 4, "pixel_cross_entropy");
  const auto [nb, c, h, w] = dims4(scores);
  const std::size_t hw = h * w;
  if (labels.size() != nb * hw) {
    throw ShapeError("pixel_cross_entropy: " + std::to_string(labels.size()) + " labels for scores " +
                     shape_string(scores.shape()));
  }
  std::size_t counted = 0;
  double total = 0;
  std::vector<Real> prob(scores.numel());
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const Real* s = scores.ptr() + b * c * hw + i;
      Real mx = s[0];
      for (std::size_t ch = 1; ch < c; ++ch) mx = std::max(mx, s[ch * hw]);
      double z = 0;
      for (std::size_t ch = 0; ch < c; ++ch) z += std::exp(static_cast<double>(s[ch * hw] - mx));
      const double lse = std::log(z) + mx;
      for (std::size_t ch = 0; ch < c; ++ch)
        prob[b * c * hw + ch * hw + i] = static_cast<Real>(std::exp(static_cast<double>(s[ch * hw]) - lse));
      const std::uint8_t lab = labels[b * hw + i];
      if (lab == ignore_label) continue;
      if (lab >= c) {
        throw ShapeError("pixel_cross_entropy: label " + std::to_string(lab) + " outside " + std::to_string(c) +
                         " classes");
      }
      total += lse - static_cast<double>(s[lab * hw]);
      ++counted;
    }
  }
  if (counted == 0) throw DomainError("cross entropy over zero labeled pixels");
  const bool track = detail::should_record({&scores});
  Tensor result = detail::make_result({1}, {static_cast<Real>(total / static_cast<double>(counted))}, track);
  if (track) {
    std::vector<std::uint8_t> labs(labels.begin(), labels.end());
    record([si = scores.impl(), y = result.impl(), prob = std::move(prob), labs = std::move(labs), nb, c, hw, counted,
            ignore_label]() {
      if (y->grad.empty()) return;
      si->ensure_grad();
      const Real g = y->grad[0] / static_cast<Real>(counted);
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const std::uint8_t lab = labs[b * hw + i];
          if (lab == ignore_label) continue;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t idx = b * c * hw + ch * hw + i;
            si->grad[idx] += g * (prob[idx] - (ch == lab ? Real(1) : Real(0)));
          }
        }
    });
  }
  return result;
}

SEDN_END_NAMESPACE
