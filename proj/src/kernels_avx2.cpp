// AVX2+FMA kernel table. This translation unit is compiled with
// -mavx2 -mfma (see src/CMakeLists.txt); it must only be entered after the
// dispatcher has confirmed CPU support.

#include "teco/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cmath>

namespace teco::kern {
namespace {

inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_hadd_ps(s, s);
  s = _mm_hadd_ps(s, s);
  return _mm_cvtss_f32(s);
}

// Shared 4x16 micro-kernel for gemm_nn (TransA=false) and gemm_tn
// (TransA=true, A stored [K,M]). B is [K,N] in both.
template <bool TransA, int MR>
inline void gemm_rows_kn(const float* a, const float* b, float* c, int i0,
                         int m, int k, int n, bool accumulate) {
  auto a_at = [&](int p, int i) -> float {
    return TransA ? a[static_cast<int64_t>(p) * m + i]
                  : a[static_cast<int64_t>(i) * k + p];
  };
  int j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256 acc[MR][2];
    for (int r = 0; r < MR; ++r) {
      acc[r][0] = _mm256_setzero_ps();
      acc[r][1] = _mm256_setzero_ps();
    }
    for (int p = 0; p < k; ++p) {
      const float* brow = b + static_cast<int64_t>(p) * n + j;
      const __m256 b0 = _mm256_loadu_ps(brow);
      const __m256 b1 = _mm256_loadu_ps(brow + 8);
      for (int r = 0; r < MR; ++r) {
        const __m256 av = _mm256_set1_ps(a_at(p, i0 + r));
        acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
        acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
      }
    }
    for (int r = 0; r < MR; ++r) {
      float* crow = c + static_cast<int64_t>(i0 + r) * n + j;
      if (accumulate) {
        acc[r][0] = _mm256_add_ps(acc[r][0], _mm256_loadu_ps(crow));
        acc[r][1] = _mm256_add_ps(acc[r][1], _mm256_loadu_ps(crow + 8));
      }
      _mm256_storeu_ps(crow, acc[r][0]);
      _mm256_storeu_ps(crow + 8, acc[r][1]);
    }
  }
  for (; j + 8 <= n; j += 8) {
    __m256 acc[MR];
    for (int r = 0; r < MR; ++r) acc[r] = _mm256_setzero_ps();
    for (int p = 0; p < k; ++p) {
      const __m256 b0 = _mm256_loadu_ps(b + static_cast<int64_t>(p) * n + j);
      for (int r = 0; r < MR; ++r) {
        acc[r] = _mm256_fmadd_ps(_mm256_set1_ps(a_at(p, i0 + r)), b0, acc[r]);
      }
    }
    for (int r = 0; r < MR; ++r) {
      float* crow = c + static_cast<int64_t>(i0 + r) * n + j;
      if (accumulate) acc[r] = _mm256_add_ps(acc[r], _mm256_loadu_ps(crow));
      _mm256_storeu_ps(crow, acc[r]);
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

void gemm_nn_avx2(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate) {
  gemm_kn<false>(a, b, c, m, k, n, accumulate);
}

void gemm_tn_avx2(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate) {
  gemm_kn<true>(a, b, c, m, k, n, accumulate);
}

void gemm_nt_avx2(const float* a, const float* b, float* c, int m, int k,
                  int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<int64_t>(i) * k;
    float* crow = c + static_cast<int64_t>(i) * n;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256 acc0 = _mm256_setzero_ps();
      __m256 acc1 = _mm256_setzero_ps();
      __m256 acc2 = _mm256_setzero_ps();
      __m256 acc3 = _mm256_setzero_ps();
      const float* b0 = b + static_cast<int64_t>(j) * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      int p = 0;
      for (; p + 8 <= k; p += 8) {
        const __m256 av = _mm256_loadu_ps(arow + p);
        acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), acc0);
        acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), acc1);
        acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), acc2);
        acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), acc3);
      }
      float s0 = hsum8(acc0), s1 = hsum8(acc1), s2 = hsum8(acc2),
            s3 = hsum8(acc3);
      for (; p < k; ++p) {
        const float av = arow[p];
        s0 += av * b0[p];
        s1 += av * b1[p];
        s2 += av * b2[p];
        s3 += av * b3[p];
      }
      if (accumulate) {
        crow[j] += s0;
        crow[j + 1] += s1;
        crow[j + 2] += s2;
        crow[j + 3] += s3;
      } else {
        crow[j] = s0;
        crow[j + 1] = s1;
        crow[j + 2] = s2;
        crow[j + 3] = s3;
      }
    }
    for (; j < n; ++j) {
      const float* brow = b + static_cast<int64_t>(j) * k;
      __m256 acc = _mm256_setzero_ps();
      int p = 0;
      for (; p + 8 <= k; p += 8) {
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p),
                              _mm256_loadu_ps(brow + p), acc);
      }
      float s = hsum8(acc);
      for (; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void axpy_avx2(float alpha, const float* x, float* y, int64_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void vadd_avx2(const float* x, const float* y, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(
        out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void vsub_avx2(const float* x, const float* y, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(
        out + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void vmul_avx2(const float* x, const float* y, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(
        out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void vscale_avx2(const float* x, float alpha, float* out, int64_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * alpha;
}

float vsum_avx2(const float* x, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = hsum8(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float vdot_avx2(const float* x, const float* y, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  }
  float s = hsum8(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void adam_update_avx2(float* p, float* m, float* v, const float* g, int64_t n,
                      float beta1, float beta2, float lr, float eps, float bc1,
                      float bc2) {
  const __m256 vb1 = _mm256_set1_ps(beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2);
  const __m256 v1mb1 = _mm256_set1_ps(1.f - beta1);
  const __m256 v1mb2 = _mm256_set1_ps(1.f - beta2);
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 vbc1 = _mm256_set1_ps(bc1);
  const __m256 vbc2 = _mm256_set1_ps(bc2);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gi = _mm256_loadu_ps(g + i);
    __m256 mi = _mm256_loadu_ps(m + i);
    __m256 vi = _mm256_loadu_ps(v + i);
    mi = _mm256_fmadd_ps(v1mb1, gi, _mm256_mul_ps(vb1, mi));
    vi = _mm256_fmadd_ps(v1mb2, _mm256_mul_ps(gi, gi), _mm256_mul_ps(vb2, vi));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_mul_ps(mi, vbc1);
    const __m256 vhat = _mm256_mul_ps(vi, vbc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
  }
  for (; i < n; ++i) {
    const float gi = g[i];
    m[i] = beta1 * m[i] + (1.f - beta1) * gi;
    v[i] = beta2 * v[i] + (1.f - beta2) * gi * gi;
    p[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + eps);
  }
}

}  // namespace

const Kernels* avx2_table() {
  static const Kernels table = {
      &gemm_nn_avx2, &gemm_nt_avx2, &gemm_tn_avx2,    &axpy_avx2,
      &vadd_avx2,    &vsub_avx2,    &vmul_avx2,       &vscale_avx2,
      &vsum_avx2,    &vdot_avx2,    &adam_update_avx2, "avx2",
  };
  return &table;
}

}  // namespace teco::kern

#else

namespace teco::kern {
const Kernels* avx2_table() { return nullptr; }
}  // namespace teco::kern

#endif
