// AVX2/FMA kernels. This translation unit is compiled with -mavx2 -mfma and is
// only entered after a CPUID check, so everything here has internal linkage:
// no inline function compiled with these flags may leak into other objects.

#include <immintrin.h>

#include "kernel_table.hpp"

namespace sedn::simd::detail {
namespace {

template <class T>
struct Vec;

template <>
struct Vec<float> {
  using R = __m256;
  static constexpr std::size_t width = 8;
  static R load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, R v) { _mm256_storeu_ps(p, v); }
  static R set1(float x) { return _mm256_set1_ps(x); }
  static R zero() { return _mm256_setzero_ps(); }
  static R add(R a, R b) { return _mm256_add_ps(a, b); }
  static R sub(R a, R b) { return _mm256_sub_ps(a, b); }
  static R mul(R a, R b) { return _mm256_mul_ps(a, b); }
  static R fma(R a, R b, R c) { return _mm256_fmadd_ps(a, b, c); }
  static R max(R a, R b) { return _mm256_max_ps(a, b); }
  static R abs(R a) { return _mm256_andnot_ps(_mm256_set1_ps(-0.0f), a); }
  static R ge(R a, R b) { return _mm256_cmp_ps(a, b, _CMP_GE_OQ); }
  static R le(R a, R b) { return _mm256_cmp_ps(a, b, _CMP_LE_OQ); }
  static R lt(R a, R b) { return _mm256_cmp_ps(a, b, _CMP_LT_OQ); }
  static R select(R mask, R if_true, R if_false) { return _mm256_blendv_ps(if_false, if_true, mask); }
  static R band(R a, R b) { return _mm256_and_ps(a, b); }
  static float hsum(R v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

template <>
struct Vec<double> {
  using R = __m256d;
  static constexpr std::size_t width = 4;
  static R load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, R v) { _mm256_storeu_pd(p, v); }
  static R set1(double x) { return _mm256_set1_pd(x); }
  static R zero() { return _mm256_setzero_pd(); }
  static R add(R a, R b) { return _mm256_add_pd(a, b); }
  static R sub(R a, R b) { return _mm256_sub_pd(a, b); }
  static R mul(R a, R b) { return _mm256_mul_pd(a, b); }
  static R fma(R a, R b, R c) { return _mm256_fmadd_pd(a, b, c); }
  static R max(R a, R b) { return _mm256_max_pd(a, b); }
  static R abs(R a) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), a); }
  static R ge(R a, R b) { return _mm256_cmp_pd(a, b, _CMP_GE_OQ); }
  static R le(R a, R b) { return _mm256_cmp_pd(a, b, _CMP_LE_OQ); }
  static R lt(R a, R b) { return _mm256_cmp_pd(a, b, _CMP_LT_OQ); }
  static R select(R mask, R if_true, R if_false) { return _mm256_blendv_pd(if_false, if_true, mask); }
  static R band(R a, R b) { return _mm256_and_pd(a, b); }
  static double hsum(R v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

// C[i, j] += sum_p A(i, p) * B[p, j] where A(i, p) = a[i*rs + p*cs]. Four rows
// by two vectors of C are kept in registers across the whole K loop.
template <class T>
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t rs, std::size_t cs,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  constexpr std::size_t NR = 2 * W;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + NR <= n; j += NR) {
      typename V::R c00 = V::load(c + (i + 0) * ldc + j), c01 = V::load(c + (i + 0) * ldc + j + W);
      typename V::R c10 = V::load(c + (i + 1) * ldc + j), c11 = V::load(c + (i + 1) * ldc + j + W);
      typename V::R c20 = V::load(c + (i + 2) * ldc + j), c21 = V::load(c + (i + 2) * ldc + j + W);
      typename V::R c30 = V::load(c + (i + 3) * ldc + j), c31 = V::load(c + (i + 3) * ldc + j + W);
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * ldb + j;
        const typename V::R b0 = V::load(brow);
        const typename V::R b1 = V::load(brow + W);
        const T* ap = a + i * rs + p * cs;
        typename V::R av = V::set1(ap[0]);
        c00 = V::fma(av, b0, c00);
        c01 = V::fma(av, b1, c01);
        av = V::set1(ap[rs]);
        c10 = V::fma(av, b0, c10);
        c11 = V::fma(av, b1, c11);
        av = V::set1(ap[2 * rs]);
        c20 = V::fma(av, b0, c20);
        c21 = V::fma(av, b1, c21);
        av = V::set1(ap[3 * rs]);
        c30 = V::fma(av, b0, c30);
        c31 = V::fma(av, b1, c31);
      }
      V::store(c + (i + 0) * ldc + j, c00);
      V::store(c + (i + 0) * ldc + j + W, c01);
      V::store(c + (i + 1) * ldc + j, c10);
      V::store(c + (i + 1) * ldc + j + W, c11);
      V::store(c + (i + 2) * ldc + j, c20);
      V::store(c + (i + 2) * ldc + j + W, c21);
      V::store(c + (i + 3) * ldc + j, c30);
      V::store(c + (i + 3) * ldc + j + W, c31);
    }
    for (; j + W <= n; j += W) {
      typename V::R acc[4] = {V::load(c + i * ldc + j), V::load(c + (i + 1) * ldc + j),
                              V::load(c + (i + 2) * ldc + j), V::load(c + (i + 3) * ldc + j)};
      for (std::size_t p = 0; p < k; ++p) {
        const typename V::R bv = V::load(b + p * ldb + j);
        const T* ap = a + i * rs + p * cs;
        for (std::size_t r = 0; r < 4; ++r) acc[r] = V::fma(V::set1(ap[r * rs]), bv, acc[r]);
      }
      for (std::size_t r = 0; r < 4; ++r) V::store(c + (i + r) * ldc + j, acc[r]);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        T acc = c[(i + r) * ldc + j];
        for (std::size_t p = 0; p < k; ++p) acc += a[(i + r) * rs + p * cs] * b[p * ldb + j];
        c[(i + r) * ldc + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * rs + p * cs];
      const typename V::R avv = V::set1(av);
      const T* brow = b + p * ldb;
      std::size_t j = 0;
      for (; j + W <= n; j += W) V::store(crow + j, V::fma(avv, V::load(brow + j), V::load(crow + j)));
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
  gemm_strided<T>(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
  gemm_strided<T>(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  typename V::R a0 = V::zero(), a1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    a0 = V::fma(V::load(x + i), V::load(y + i), a0);
    a1 = V::fma(V::load(x + i + W), V::load(y + i + W), a1);
  }
  for (; i + W <= n; i += W) a0 = V::fma(V::load(x + i), V::load(y + i), a0);
  T acc = V::hsum(V::add(a0, a1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

// C[i, j] += dot(A[i, :], B[j, :]); four columns share each load of A.
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const T* b0 = b + (j + 0) * ldb;
      const T* b1 = b + (j + 1) * ldb;
      const T* b2 = b + (j + 2) * ldb;
      const T* b3 = b + (j + 3) * ldb;
      typename V::R s0 = V::zero(), s1 = V::zero(), s2 = V::zero(), s3 = V::zero();
      std::size_t p = 0;
      for (; p + W <= k; p += W) {
        const typename V::R av = V::load(arow + p);
        s0 = V::fma(av, V::load(b0 + p), s0);
        s1 = V::fma(av, V::load(b1 + p), s1);
        s2 = V::fma(av, V::load(b2 + p), s2);
        s3 = V::fma(av, V::load(b3 + p), s3);
      }
      T r0 = V::hsum(s0), r1 = V::hsum(s1), r2 = V::hsum(s2), r3 = V::hsum(s3);
      for (; p < k; ++p) {
        r0 += arow[p] * b0[p];
        r1 += arow[p] * b1[p];
        r2 += arow[p] * b2[p];
        r3 += arow[p] * b3[p];
      }
      c[i * ldc + j + 0] += r0;
      c[i * ldc + j + 1] += r1;
      c[i * ldc + j + 2] += r2;
      c[i * ldc + j + 3] += r3;
    }
    for (; j < n; ++j) c[i * ldc + j] += dot<T>(k, arow, b + j * ldb);
  }
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  const typename V::R av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(y + i, V::fma(av, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void add(std::size_t n, const T* x, const T* y, T* out) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(out + i, V::add(V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
void mul(std::size_t n, const T* x, const T* y, T* out) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(out + i, V::mul(V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

// Same operation order as the scalar reference, without FMA, so the outputs
// are bit-identical.
template <class T>
typename Vec<T>::R spike_vec(typename Vec<T>::R v, const NeuronCoeffs<T>& k) {
  using V = Vec<T>;
  const typename V::R zero = V::zero();
  const typename V::R one = V::set1(T(1));
  if (k.fn == SpikeFn::heaviside) return V::band(V::ge(v, zero), one);
  const T w = k.width;
  const typename V::R wv = V::set1(w);
  const typename V::R inv = V::set1(T(1) / (T(2) * w * w));
  const typename V::R t = V::add(v, wv);
  const typename V::R lo = V::mul(V::mul(t, t), inv);
  const typename V::R s = V::sub(wv, v);
  const typename V::R hi = V::sub(one, V::mul(V::mul(s, s), inv));
  typename V::R r = V::select(V::lt(v, wv), hi, one);
  r = V::select(V::lt(v, zero), lo, r);
  r = V::select(V::le(v, V::sub(zero, wv)), zero, r);
  return r;
}

template <class T>
T spike_scalar(T v, const NeuronCoeffs<T>& k) {
  if (k.fn == SpikeFn::heaviside) return v >= T(0) ? T(1) : T(0);
  const T w = k.width;
  const T inv_2w2 = T(1) / (T(2) * w * w);
  if (v <= -w) return T(0);
  if (v < T(0)) {
    const T t = v + w;
    return (t * t) * inv_2w2;
  }
  if (v < w) {
    const T s = w - v;
    return T(1) - (s * s) * inv_2w2;
  }
  return T(1);
}

template <class T>
void neuron_forward(std::size_t n, const NeuronCoeffs<T>& k, const T* current, const T* u_prev, const T* y_prev,
                    const T* a_prev, T* u_out, T* a_out, T* y_out) {
  using V = Vec<T>;
  const typename V::R one = V::set1(T(1));
  const typename V::R tau = V::set1(k.tau);
  const typename V::R tau_a = V::set1(k.tau_a);
  const typename V::R u_th = V::set1(k.u_th);
  const typename V::R beta = V::set1(k.beta);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const typename V::R yp = V::load(y_prev + i);
    const typename V::R r = V::sub(one, yp);
    const typename V::R u = V::add(V::mul(V::mul(tau, V::load(u_prev + i)), r), V::load(current + i));
    typename V::R v;
    if (k.adaptive) {
      const typename V::R a = V::add(V::mul(tau_a, V::load(a_prev + i)), yp);
      V::store(a_out + i, a);
      v = V::sub(u, V::add(u_th, V::mul(beta, a)));
    } else {
      v = V::sub(u, u_th);
    }
    V::store(u_out + i, u);
    V::store(y_out + i, spike_vec<T>(v, k));
  }
  for (; i < n; ++i) {
    const T r = T(1) - y_prev[i];
    const T u = (k.tau * u_prev[i]) * r + current[i];
    T v;
    if (k.adaptive) {
      const T a = k.tau_a * a_prev[i] + y_prev[i];
      a_out[i] = a;
      v = u - (k.u_th + k.beta * a);
    } else {
      v = u - k.u_th;
    }
    u_out[i] = u;
    y_out[i] = spike_scalar(v, k);
  }
}

template <class T>
T neuron_backward(std::size_t n, const NeuronCoeffs<T>& k, const T* u_prev, const T* y_prev, const T* a_prev,
                  const T* u_out, const T* a_out, const T* g_u, const T* g_a, const T* g_y, T* g_current,
                  T* g_u_prev, T* g_y_prev, T* g_a_prev) {
  using V = Vec<T>;
  const T w = k.width;
  const T inv_w2_s = T(1) / (w * w);
  const typename V::R zero = V::zero();
  const typename V::R one = V::set1(T(1));
  const typename V::R wv = V::set1(w);
  const typename V::R inv_w2 = V::set1(inv_w2_s);
  const typename V::R tau = V::set1(k.tau);
  const typename V::R tau_a = V::set1(k.tau_a);
  const typename V::R u_th = V::set1(k.u_th);
  const typename V::R beta = V::set1(k.beta);
  typename V::R acc = V::zero();
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const typename V::R u = V::load(u_out + i);
    const typename V::R v = k.adaptive ? V::sub(u, V::add(u_th, V::mul(beta, V::load(a_out + i)))) : V::sub(u, u_th);
    const typename V::R dist = V::max(V::sub(wv, V::abs(v)), zero);
    const typename V::R gv = V::mul(V::load(g_y + i), V::mul(dist, inv_w2));
    const typename V::R gut = V::add(V::load(g_u + i), gv);
    V::store(g_current + i, V::add(V::load(g_current + i), gut));
    const typename V::R gtau = V::mul(gut, tau);
    V::store(g_u_prev + i, V::add(V::load(g_u_prev + i), V::mul(gtau, V::sub(one, V::load(y_prev + i)))));
    const typename V::R reset_term = V::mul(gtau, V::load(u_prev + i));
    if (k.adaptive) {
      const typename V::R gat = V::sub(V::load(g_a + i), V::mul(beta, gv));
      V::store(g_y_prev + i, V::add(V::load(g_y_prev + i), V::sub(gat, reset_term)));
      V::store(g_a_prev + i, V::add(V::load(g_a_prev + i), V::mul(gat, tau_a)));
      acc = V::add(acc, V::mul(gat, V::load(a_prev + i)));
    } else {
      V::store(g_y_prev + i, V::sub(V::load(g_y_prev + i), reset_term));
    }
  }
  T tau_a_grad = V::hsum(acc);
  for (; i < n; ++i) {
    const T v = k.adaptive ? u_out[i] - (k.u_th + k.beta * a_out[i]) : u_out[i] - k.u_th;
    const T av = v < T(0) ? -v : v;
    T dist = w - av;
    if (dist < T(0)) dist = T(0);
    const T gv = g_y[i] * (dist * inv_w2_s);
    const T gut = g_u[i] + gv;
    g_current[i] += gut;
    const T gtau = gut * k.tau;
    g_u_prev[i] += gtau * (T(1) - y_prev[i]);
    if (k.adaptive) {
      const T gat = g_a[i] - k.beta * gv;
      g_y_prev[i] += gat - gtau * u_prev[i];
      g_a_prev[i] += gat * k.tau_a;
      tau_a_grad += gat * a_prev[i];
    } else {
      g_y_prev[i] -= gtau * u_prev[i];
    }
  }
  return tau_a_grad;
}

template <class T>
KernelTable<T> make_table() {
  return KernelTable<T>{&gemm_nn<T>,         &gemm_tn<T>, &gemm_nt<T>, &axpy<T>,
                        &dot<T>,             &add<T>,     &mul<T>,     &neuron_forward<T>,
                        &neuron_backward<T>};
}

}  // namespace

const KernelTable<float>& avx2_table_f32() {
  static const KernelTable<float> table = make_table<float>();
  return table;
}

const KernelTable<double>& avx2_table_f64() {
  static const KernelTable<double> table = make_table<double>();
  return table;
}

}  // namespace sedn::simd::detail
