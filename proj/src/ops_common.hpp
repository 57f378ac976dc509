#pragma once

// Shared helpers for the op implementations. dtype-dispatched kernel
// wrappers route float32 through the runtime kernel table and float64
// through the scalar reference templates.

#include <string>

#include "teco/detail/kernels_ref.hpp"
#include "teco/kernels.hpp"
#include "teco/ops.hpp"
#include "teco/parallel.hpp"
#include "teco/tape.hpp"
#include "teco/tensor.hpp"

namespace teco::nn::detail {

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, bool acc);
template <>
inline void gemm_nn<float>(const float* a, const float* b, float* c, int m,
                           int k, int n, bool acc) {
  kern::active().gemm_nn(a, b, c, m, k, n, acc);
}
template <>
inline void gemm_nn<double>(const double* a, const double* b, double* c, int m,
                            int k, int n, bool acc) {
  kern::ref::gemm_nn(a, b, c, m, k, n, acc);
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, bool acc);
template <>
inline void gemm_nt<float>(const float* a, const float* b, float* c, int m,
                           int k, int n, bool acc) {
  kern::active().gemm_nt(a, b, c, m, k, n, acc);
}
template <>
inline void gemm_nt<double>(const double* a, const double* b, double* c, int m,
                            int k, int n, bool acc) {
  kern::ref::gemm_nt(a, b, c, m, k, n, acc);
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, bool acc);
template <>
inline void gemm_tn<float>(const float* a, const float* b, float* c, int m,
                           int k, int n, bool acc) {
  kern::active().gemm_tn(a, b, c, m, k, n, acc);
}
template <>
inline void gemm_tn<double>(const double* a, const double* b, double* c, int m,
                            int k, int n, bool acc) {
  kern::ref::gemm_tn(a, b, c, m, k, n, acc);
}

// Row-parallel variants (contiguous row blocks keep results thread-count
// independent). Only nn/nt split cleanly without leading-dimension support.
inline void sgemm_nn_par(const float* a, const float* b, float* c, int m,
                         int k, int n, bool acc) {
  if (m >= 8 && ThreadPool::instance().threads() > 1) {
    parallel_for(m, [&](int64_t lo, int64_t hi) {
      kern::active().gemm_nn(a + lo * k, b, c + lo * n,
                             static_cast<int>(hi - lo), k, n, acc);
    });
  } else {
    kern::active().gemm_nn(a, b, c, m, k, n, acc);
  }
}

inline void sgemm_nt_par(const float* a, const float* b, float* c, int m,
                         int k, int n, bool acc) {
  if (m >= 8 && ThreadPool::instance().threads() > 1) {
    parallel_for(m, [&](int64_t lo, int64_t hi) {
      kern::active().gemm_nt(a + lo * k, b, c + lo * n,
                             static_cast<int>(hi - lo), k, n, acc);
    });
  } else {
    kern::active().gemm_nt(a, b, c, m, k, n, acc);
  }
}

inline Tensor scale_raw(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  if (a.dtype() == DType::F32) {
    kern::active().vscale(a.f32(), static_cast<float>(s), out.f32(), a.numel());
  } else {
    kern::ref::vscale(a.f64(), s, out.f64(), a.numel());
  }
  return out;
}

inline Tensor mul_raw(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  if (a.dtype() == DType::F32) {
    kern::active().vmul(a.f32(), b.f32(), out.f32(), a.numel());
  } else {
    kern::ref::vmul(a.f64(), b.f64(), out.f64(), a.numel());
  }
  return out;
}

// Accumulate a freshly built gradient, handing over the buffer when the
// slot is empty (g must not be used afterwards).
inline void accumulate_move(const std::shared_ptr<GradSlot>& slot,
                            Tensor&& g) {
  if (!slot) return;
  if (!slot->has) {
    slot->grad = std::move(g);
    slot->has = true;
    return;
  }
  add_inplace(slot->grad, g);
}

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape()) {
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
         " vs " + shape_str(b.shape()));
  }
  if (a.dtype() != b.dtype()) {
    fail(std::string(op) + ": dtype mismatch " +
         std::string(dtype_name(a.dtype())) + " vs " + dtype_name(b.dtype()));
  }
}

inline void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) fail(std::string(op) + ": undefined tensor argument");
}

}  // namespace teco::nn::detail
