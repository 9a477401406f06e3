#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernel_table.hpp"

namespace sedn::simd {
namespace {

bool cpu_has_avx2() {
#if defined(SEDN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__)) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  // SEDN_ISA=scalar forces the reference kernels for a whole process.
  if (const char* env = std::getenv("SEDN_ISA"); env != nullptr && std::string(env) == "scalar") {
    return Isa::scalar;
  }
  return best_supported_isa();
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

template <class T>
const detail::KernelTable<T>& table();

template <>
const detail::KernelTable<float>& table<float>() {
#if defined(SEDN_HAVE_AVX2)
  if (active().load(std::memory_order_relaxed) == Isa::avx2) return detail::avx2_table_f32();
#endif
  return detail::scalar_table_f32();
}

template <>
const detail::KernelTable<double>& table<double>() {
#if defined(SEDN_HAVE_AVX2)
  if (active().load(std::memory_order_relaxed) == Isa::avx2) return detail::avx2_table_f64();
#endif
  return detail::scalar_table_f64();
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa best_supported_isa() {
  static const bool avx2 = cpu_has_avx2();
  return avx2 ? Isa::avx2 : Isa::scalar;
}

bool isa_supported(Isa isa) { return isa == Isa::scalar || best_supported_isa() == Isa::avx2; }

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("kernel variant " + std::string(isa_name(isa)) + " is not supported here");
  }
  active().store(isa, std::memory_order_relaxed);
}

#define SEDN_DISPATCH_BOTH(T)                                                                                    \
  void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,             \
               std::size_t ldb, T* c, std::size_t ldc) {                                                         \
    table<T>().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc);                                                         \
  }                                                                                                              \
  void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,             \
               std::size_t ldb, T* c, std::size_t ldc) {                                                         \
    table<T>().gemm_tn(m, n, k, a, lda, b, ldb, c, ldc);                                                         \
  }                                                                                                              \
  void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,             \
               std::size_t ldb, T* c, std::size_t ldc) {                                                         \
    table<T>().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc);                                                         \
  }                                                                                                              \
  void axpy(std::size_t n, T alpha, const T* x, T* y) { table<T>().axpy(n, alpha, x, y); }                      \
  T dot(std::size_t n, const T* x, const T* y) { return table<T>().dot(n, x, y); }                              \
  void add(std::size_t n, const T* x, const T* y, T* out) { table<T>().add(n, x, y, out); }                     \
  void mul(std::size_t n, const T* x, const T* y, T* out) { table<T>().mul(n, x, y, out); }                     \
  void neuron_forward(std::size_t n, const NeuronCoeffs<T>& k, const T* current, const T* u_prev,               \
                      const T* y_prev, const T* a_prev, T* u_out, T* a_out, T* y_out) {                          \
    table<T>().neuron_forward(n, k, current, u_prev, y_prev, a_prev, u_out, a_out, y_out);                       \
  }                                                                                                              \
  T neuron_backward(std::size_t n, const NeuronCoeffs<T>& k, const T* u_prev, const T* y_prev, const T* a_prev, \
                    const T* u_out, const T* a_out, const T* g_u, const T* g_a, const T* g_y, T* g_current,     \
                    T* g_u_prev, T* g_y_prev, T* g_a_prev) {                                                     \
    return table<T>().neuron_backward(n, k, u_prev, y_prev, a_prev, u_out, a_out, g_u, g_a, g_y, g_current,     \
                                      g_u_prev, g_y_prev, g_a_prev);                                             \
  }

SEDN_DISPATCH_BOTH(float)
SEDN_DISPATCH_BOTH(double)

#undef SEDN_DISPATCH_BOTH

}  // namespace sedn::simd
