// NEON kernel table for aarch64. Mirrors the AVX2 table with 4-lane vectors.

#include "teco/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

namespace teco::kern {
namespace {

template <bool TransA, int MR>
inline void gemm_rows_kn(const float* a, const float* b, float* c, int i0,
                         int m, int k, int n, bool accumulate) {
  auto a_at = [&](int p, int i) -> float {
    return TransA ? a[static_cast<int64_t>(p) * m + i]
                  : a[static_cast<int64_t>(i) * k + p];
  };
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    float32x4_t acc[MR][2];
    for (int r = 0; r < MR; ++r) {
      acc[r][0] = vdupq_n_f32(0.f);
      acc[r][1] = vdupq_n_f32(0.f);
    }
    for (int p = 0; p < k; ++p) {
      const float* brow = b + static_cast<int64_t>(p) * n + j;
      const float32x4_t b0 = vld1q_f32(brow);
      const float32x4_t b1 = vld1q_f32(brow + 4);
      for (int r = 0; r < MR; ++r) {
        const float32x4_t av = vdupq_n_f32(a_at(p, i0 + r));
        acc[r][0] = vfmaq_f32(acc[r][0], av, b0);
        acc[r][1] = vfmaq_f32(acc[r][1], av, b1);
      }
    }
    for (int r = 0; r < MR; ++r) {
      float* crow = c + static_cast<int64_t>(i0 + r) * n + j;
      if (accumulate) {
        acc[r][0] = vaddq_f32(acc[r][0], vld1q_f32(crow));
        acc[r][1] = vaddq_f32(acc[r][1], vld1q_f32(crow + 4));
      }
      vst1q_f32(crow, acc[r][0]);
      vst1q_f32(crow + 4, acc[r][1]);
    }
  }
  for (; j < n; ++j) {
    for (int r = 0; r < MR; ++r) {
      float acc = 0.f;
      for (int p = 0; p < k; ++p) {
        acc += a_at(p, i0 + r) * b[static_cast<int64_t>(p) * n + j];
      }
      float* cp = c + static_cast<int64_t>(i0 + r) * n + j;
      *cp = accumulate ? *cp + acc : acc;
    }
  }
}

template <bool TransA>
void gemm_kn(const float* a, const float* b, float* c, int m, int k, int n,
             bool accumulate) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    gemm_rows_kn<TransA, 4>(a, b, c, i, m, k, n, accumulate);
  }
  for (; i < m; ++i) {
    gemm_rows_kn<TransA, 1>(a, b, c, i, m, k, n, accumulate);
  }
}

void gemm_nn_neon(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate) {
  gemm_kn<false>(a, b, c, m, k, n, accumulate);
}

void gemm_tn_neon(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate) {
  gemm_kn<true>(a, b, c, m, k, n, accumulate);
}

void gemm_nt_neon(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<int64_t>(i) * k;
    float* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<int64_t>(j) * k;
      float32x4_t acc = vdupq_n_f32(0.f);
      int p = 0;
      for (; p + 4 <= k; p += 4) {
        acc = vfmaq_f32(acc, vld1q_f32(arow + p), vld1q_f32(brow + p));
      }
      float s = vaddvq_f32(acc);
      for (; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void axpy_neon(float alpha, const float* x, float* y, int64_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void vadd_neon(const float* x, const float* y, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(out + i, vaddq_f32(vld1q_f32(x + i), vld1q_f32(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void vsub_neon(const float* x, const float* y, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(out + i, vsubq_f32(vld1q_f32(x + i), vld1q_f32(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void vmul_neon(const float* x, const float* y, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(out + i, vmulq_f32(vld1q_f32(x + i), vld1q_f32(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void vscale_neon(const float* x, float alpha, float* out, int64_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(out + i, vmulq_f32(va, vld1q_f32(x + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * alpha;
}

float vsum_neon(const float* x, int64_t n) {
  float32x4_t acc = vdupq_n_f32(0.f);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float vdot_neon(const float* x, const float* y, int64_t n) {
  float32x4_t acc = vdupq_n_f32(0.f);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = vfmaq_f32(acc, vld1q_f32(x + i), vld1q_f32(y + i));
  }
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void adam_update_neon(float* p, float* m, float* v, const float* g, int64_t n,
                      float beta1, float beta2, float lr, float eps, float bc1,
                      float bc2) {
  for (int64_t i = 0; i < n; ++i) {
    const float gi = g[i];
    m[i] = beta1 * m[i] + (1.f - beta1) * gi;
    v[i] = beta2 * v[i] + (1.f - beta2) * gi * gi;
    p[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + eps);
  }
}

}  // namespace

const Kernels* neon_table() {
  static const Kernels table = {
      &gemm_nn_neon, &gemm_nt_neon, &gemm_tn_neon,    &axpy_neon,
      &vadd_neon,    &vsub_neon,    &vmul_neon,       &vscale_neon,
      &vsum_neon,    &vdot_neon,    &adam_update_neon, "neon",
  };
  return &table;
}

}  // namespace teco::kern

#else

namespace teco::kern {
const Kernels* neon_table() { return nullptr; }
}  // namespace teco::kern

#endif
