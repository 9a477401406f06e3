#pragma once

#include <cstddef>

#include "sedn/simd.hpp"

namespace sedn::simd::detail {

template <class T>
struct KernelTable {
  void (*gemm_nn)(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*, std::size_t, T*,
                  std::size_t);
  void (*gemm_tn)(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*, std::size_t, T*,
                  std::size_t);
  void (*gemm_nt)(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*, std::size_t, T*,
                  std::size_t);
  void (*axpy)(std::size_t, T, const T*, T*);
  T (*dot)(std::size_t, const T*, const T*);
  void (*add)(std::size_t, const T*, const T*, T*);
  void (*mul)(std::size_t, const T*, const T*, T*);
  void (*neuron_forward)(std::size_t, const NeuronCoeffs<T>&, const T*, const T*, const T*, const T*, T*, T*, T*);
  T (*neuron_backward)(std::size_t, const NeuronCoeffs<T>&, const T*, const T*, const T*, const T*, const T*,
                       const T*, const T*, const T*, T*, T*, T*, T*);
};

const KernelTable<float>& scalar_table_f32();
const KernelTable<double>& scalar_table_f64();
#if defined(SEDN_HAVE_AVX2)
const KernelTable<float>& avx2_table_f32();
const KernelTable<double>& avx2_table_f64();
#endif

}  // namespace sedn::simd::detail
