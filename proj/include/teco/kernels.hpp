#pragma once

// Hot arithmetic inner loops behind a runtime-dispatched function table.
// Scalar reference implementations always exist; an AVX2 (x86-64) or NEON
// (aarch64) table is selected at startup when the CPU supports it. The
// TECO_KERNELS environment variable ("scalar", "avx2", "neon") overrides
// the automatic choice.
//
// All matrices are dense row-major, single precision. Double-precision
// reference templates for the gradient-check paths live in
// detail/kernels_ref.hpp and are never dispatched.

#include <cstdint>
#include <string>
#include <vector>

namespace teco::kern {

struct Kernels {
  // C[M,N] (+)= A[M,K] * B[K,N]
  void (*gemm_nn)(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate);
  // C[M,N] (+)= A[M,K] * B[N,K]^T
  void (*gemm_nt)(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate);
  // C[M,N] (+)= A[K,M]^T * B[K,N]
  void (*gemm_tn)(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate);

  void (*axpy)(float alpha, const float* x, float* y, int64_t n);
  void (*vadd)(const float* x, const float* y, float* out, int64_t n);
  void (*vsub)(const float* x, const float* y, float* out, int64_t n);
  void (*vmul)(const float* x, const float* y, float* out, int64_t n);
  void (*vscale)(const float* x, float alpha, float* out, int64_t n);
  float (*vsum)(const float* x, int64_t n);
  float (*vdot)(const float* x, const float* y, int64_t n);

  // Fused Adam parameter update. bc1/bc2 are the bias-correction factors
  // 1/(1-beta1^t) and 1/(1-beta2^t).
  void (*adam_update)(float* p, float* m, float* v, const float* g, int64_t n,
                      float beta1, float beta2, float lr, float eps, float bc1,
                      float bc2);

  const char* name;
};

// Table chosen at first use; stable for the lifetime of the process.
const Kernels& active();

// Reference table, always available (used by equivalence tests).
const Kernels& scalar_table();

// Names of every table this build can run on the current CPU.
std::vector<std::string> available_tables();

// Table by name, or nullptr when the build/CPU cannot run it.
const Kernels* table_by_name(const std::string& name);

}  // namespace teco::kern
