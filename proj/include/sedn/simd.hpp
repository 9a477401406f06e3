#pragma once

// Dense arithmetic kernels with a scalar reference implementation and an
// AVX2/FMA variant. The variant is chosen once at startup from CPUID and can be
// overridden (tests pin each variant to check equivalence).
//
// Elementwise kernels are bit-identical across variants. Reductions and GEMM
// use FMA and a different summation order in the AVX2 variant, so they agree
// only to rounding.

#include <cstddef>
#include <string_view>

namespace sedn::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
Isa best_supported_isa();
Isa active_isa();
bool isa_supported(Isa isa);
/// Throws std::invalid_argument when the CPU (or the build) lacks `isa`.
void set_active_isa(Isa isa);

/// RAII override of the active variant, restored on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

enum class SpikeFn : int { heaviside = 0, smooth = 1 };

/// Per-layer constants of the iterative (adaptive) LIF update.
template <class T>
struct NeuronCoeffs {
  T tau;
  T tau_a;
  T u_th;
  T beta;
  T width;  // surrogate half-width; the hat derivative has height 1/width
  bool adaptive;
  SpikeFn fn;
};

// All matrices are row-major with explicit leading dimensions; every GEMM
// accumulates into C.

/// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);
/// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);
/// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);

/// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);
/// out = x + y
void add(std::size_t n, const float* x, const float* y, float* out);
void add(std::size_t n, const double* x, const double* y, double* out);
/// out = x * y
void mul(std::size_t n, const float* x, const float* y, float* out);
void mul(std::size_t n, const double* x, const double* y, double* out);

/// One neuron step for n neurons:
///   u = tau*u_prev*(1-y_prev) + current
///   a = tau_a*a_prev + y_prev            (adaptive only; a_out untouched otherwise)
///   v = u - (u_th + beta*a)
///   y = H(v)  or the integral of the surrogate hat when fn == smooth
void neuron_forward(std::size_t n, const NeuronCoeffs<float>& k, const float* current, const float* u_prev,
                    const float* y_prev, const float* a_prev, float* u_out, float* a_out, float* y_out);
void neuron_forward(std::size_t n, const NeuronCoeffs<double>& k, const double* current, const double* u_prev,
                    const double* y_prev, const double* a_prev, double* u_out, double* a_out, double* y_out);

/// Reverse of neuron_forward. Incoming gradients g_u, g_a, g_y are w.r.t. the
/// step outputs; the outgoing ones are accumulated (+=). Returns
/// sum(g_a_total * a_prev), the contribution to d(loss)/d(tau_a).
float neuron_backward(std::size_t n, const NeuronCoeffs<float>& k, const float* u_prev, const float* y_prev,
                      const float* a_prev, const float* u_out, const float* a_out, const float* g_u,
                      const float* g_a, const float* g_y, float* g_current, float* g_u_prev, float* g_y_prev,
                      float* g_a_prev);
double neuron_backward(std::size_t n, const NeuronCoeffs<double>& k, const double* u_prev, const double* y_prev,
                       const double* a_prev, const double* u_out, const double* a_out, const double* g_u,
                       const double* g_a, const double* g_y, double* g_current, double* g_u_prev,
                       double* g_y_prev, double* g_a_prev);

}  // namespace sedn::simd
