// Scalar reference kernels. Every other variant is tested against these.

#include <cmath>

#include "kernel_table.hpp"

namespace sedn::simd::detail {
namespace {

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * lda;
    const T* brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      const T* arow = a + i * lda;
      const T* brow = b + j * ldb;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * ldc + j] += acc;
    }
  }
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void add(std::size_t n, const T* x, const T* y, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
void mul(std::size_t n, const T* x, const T* y, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

template <class T>
T spike(T v, const NeuronCoeffs<T>& k) {
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
  for (std::size_t i = 0; i < n; ++i) {
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
    y_out[i] = spike(v, k);
  }
}

template <class T>
T neuron_backward(std::size_t n, const NeuronCoeffs<T>& k, const T* u_prev, const T* y_prev, const T* a_prev,
                  const T* u_out, const T* a_out, const T* g_u, const T* g_a, const T* g_y, T* g_current,
                  T* g_u_prev, T* g_y_prev, T* g_a_prev) {
  const T w = k.width;
  const T inv_w2 = T(1) / (w * w);
  T tau_a_grad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T v = k.adaptive ? u_out[i] - (k.u_th + k.beta * a_out[i]) : u_out[i] - k.u_th;
    T dist = w - std::fabs(v);
    if (dist < T(0)) dist = T(0);
    const T gv = g_y[i] * (dist * inv_w2);
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

const KernelTable<float>& scalar_table_f32() {
  static const KernelTable<float> table = make_table<float>();
  return table;
}

const KernelTable<double>& scalar_table_f64() {
  static const KernelTable<double> table = make_table<double>();
  return table;
}

}  // namespace sedn::simd::detail
