#include <cmath>
#include <cstring>

#include "ops_common.hpp"
#include "teco/ops.hpp"

namespace teco::nn {

using detail::accumulate_move;
using detail::check_defined;

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
void layer_norm_fwd(const T* x, const T* gain, const T* bias, T* out, T* xhat,
                    T* rstd, int64_t rows, int64_t f) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * f;
    T mean = 0;
    for (int64_t j = 0; j < f; ++j) mean += xr[j];
    mean /= static_cast<T>(f);
    T var = 0;
    for (int64_t j = 0; j < f; ++j) {
      const T dv = xr[j] - mean;
      var += dv * dv;
    }
    var /= static_cast<T>(f);
    const T rs = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd[r] = rs;
    T* hr = xhat + r * f;
    T* orow = out + r * f;
    for (int64_t j = 0; j < f; ++j) {
      hr[j] = (xr[j] - mean) * rs;
      orow[j] = gain[j] * hr[j] + bias[j];
    }
  }
}

template <typename T>
void layer_norm_bwd(const T* g, const T* gain, const T* xhat, const T* rstd,
                    T* dx, T* dgain, T* dbias, int64_t rows, int64_t f) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* gr = g + r * f;
    const T* hr = xhat + r * f;
    T sum_dh = 0, sum_dh_h = 0;
    for (int64_t j = 0; j < f; ++j) {
      const T dh = gr[j] * gain[j];
      sum_dh += dh;
      sum_dh_h += dh * hr[j];
      dgain[j] += gr[j] * hr[j];
      dbias[j] += gr[j];
    }
    const T inv_f = T(1) / static_cast<T>(f);
    T* dxr = dx + r * f;
    for (int64_t j = 0; j < f; ++j) {
      const T dh = gr[j] * gain[j];
      dxr[j] = rstd[r] * (dh - sum_dh * inv_f - hr[j] * sum_dh_h * inv_f);
    }
  }
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  check_defined(x, "layer_norm");
  check_defined(gain, "layer_norm");
  check_defined(bias, "layer_norm");
  const int64_t f = x.dim(x.rank() - 1);
  if (gain.rank() != 1 || gain.dim(0) != f || bias.rank() != 1 ||
      bias.dim(0) != f) {
    fail("layer_norm: gain/bias must be [" + std::to_string(f) + "], got " +
         shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  const int64_t rows = x.numel() / f;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  Tensor xhat = Tensor::zeros(x.shape(), x.dtype());
  Tensor rstd = Tensor::zeros({rows}, x.dtype());
  if (x.dtype() == DType::F32) {
    layer_norm_fwd(x.f32(), gain.f32(), bias.f32(), out.f32(), xhat.f32(),
                   rstd.f32(), rows, f);
  } else {
    layer_norm_fwd(x.f64(), gain.f64(), bias.f64(), out.f64(), xhat.f64(),
                   rstd.f64(), rows, f);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x, &gain, &bias})) {
    auto sx = tape->slot_for_input(x);
    auto sg = tape->slot_for_input(gain);
    auto sb = tape->slot_for_input(bias);
    auto so = tape->slot_for_output(out);
    tape->record([sx, sg, sb, so, gain, xhat, rstd, rows, f] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(xhat.shape(), xhat.dtype());
      Tensor dgain = Tensor::zeros({f}, xhat.dtype());
      Tensor dbias = Tensor::zeros({f}, xhat.dtype());
      if (xhat.dtype() == DType::F32) {
        layer_norm_bwd(so->grad.f32(), gain.f32(), xhat.f32(), rstd.f32(),
                       dx.f32(), dgain.f32(), dbias.f32(), rows, f);
      } else {
        layer_norm_bwd(so->grad.f64(), gain.f64(), xhat.f64(), rstd.f64(),
                       dx.f64(), dgain.f64(), dbias.f64(), rows, f);
      }
      accumulate_move(sx, std::move(dx));
      accumulate_move(sg, std::move(dgain));
      accumulate_move(sb, std::move(dbias));
    });
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  check_defined(x, "l2_normalize_rows");
  const int64_t d = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / d;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  auto forward = [&](auto* xp, auto* op) {
    using T = std::remove_const_t<std::remove_pointer_t<decltype(xp)>>;
    for (int64_t r = 0; r < rows; ++r) {
      const T* xr = xp + r * d;
      T ss = 0;
      for (int64_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
      const T inv = T(1) / std::sqrt(ss + static_cast<T>(eps));
      T* orow = op + r * d;
      for (int64_t j = 0; j < d; ++j) orow[j] = xr[j] * inv;
    }
  };
  if (x.dtype() == DType::F32) {
    forward(x.f32(), out.f32());
  } else {
    forward(x.f64(), out.f64());
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    tape->record([sx, so, x, rows, d, eps] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(x.shape(), x.dtype());
      auto backward = [&](auto* xp, auto* gp, auto* dp) {
        using T = std::remove_const_t<std::remove_pointer_t<decltype(xp)>>;
        for (int64_t r = 0; r < rows; ++r) {
          const T* xr = xp + r * d;
          const T* gr = gp + r * d;
          T ss = 0, xg = 0;
          for (int64_t j = 0; j < d; ++j) {
            ss += xr[j] * xr[j];
            xg += xr[j] * gr[j];
          }
          const T rnorm = std::sqrt(ss + static_cast<T>(eps));
          const T inv = T(1) / rnorm;
          const T inv3 = inv * inv * inv;
          T* dr = dp + r * d;
          for (int64_t j = 0; j < d; ++j) {
            dr[j] = gr[j] * inv - xr[j] * xg * inv3;
          }
        }
      };
      if (x.dtype() == DType::F32) {
        backward(x.f32(), so->grad.f32(), dx.f32());
      } else {
        backward(x.f64(), so->grad.f64(), dx.f64());
      }
      accumulate_move(sx, std::move(dx));
    });
  }
  return out;
}

namespace {

// Row softmax over [lo, limit); entries outside are left as zero.
template <typename T>
void softmax_range(const T* row, T* out, int64_t lo, int64_t limit,
                   int64_t width) {
  T mx = row[lo];
  for (int64_t j = lo + 1; j < limit; ++j) mx = std::max(mx, row[j]);
  T z = 0;
  for (int64_t j = lo; j < limit; ++j) {
    out[j] = std::exp(row[j] - mx);
    z += out[j];
  }
  const T inv = T(1) / z;
  for (int64_t j = 0; j < lo; ++j) out[j] = T(0);
  for (int64_t j = lo; j < limit; ++j) out[j] *= inv;
  for (int64_t j = limit; j < width; ++j) out[j] = T(0);
}

template <typename T>
void softmax_prefix(const T* row, T* out, int64_t limit, int64_t width) {
  softmax_range(row, out, int64_t{0}, limit, width);
}

struct AttnDims {
  int64_t b, t, c, heads;
  int64_t window;
  bool causal;
};

template <typename T>
void attention_impl(const T* q, const T* k, const T* v, T* out, T* probs,
                    const AttnDims& dm) {
  const int64_t t = dm.t, c = dm.c;
  const int64_t d = c / dm.heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<T> qh(static_cast<size_t>(t * d));
  std::vector<T> kh(static_cast<size_t>(t * d));
  std::vector<T> vh(static_cast<size_t>(t * d));
  std::vector<T> s(static_cast<size_t>(t * t));
  std::vector<T> o(static_cast<size_t>(t * d));
  for (int64_t b = 0; b < dm.b; ++b) {
    for (int64_t h = 0; h < dm.heads; ++h) {
      const int64_t off = b * t * c + h * d;
      for (int64_t i = 0; i < t; ++i) {
        std::memcpy(qh.data() + i * d, q + off + i * c, sizeof(T) * d);
        std::memcpy(kh.data() + i * d, k + off + i * c, sizeof(T) * d);
        std::memcpy(vh.data() + i * d, v + off + i * c, sizeof(T) * d);
      }
      detail::gemm_nt(qh.data(), kh.data(), s.data(), static_cast<int>(t),
                      static_cast<int>(d), static_cast<int>(t), false);
      for (int64_t i = 0; i < t * t; ++i) s[i] *= scale;
      T* p = probs + (b * dm.heads + h) * t * t;
      for (int64_t i = 0; i < t; ++i) {
        const int64_t hi = dm.causal ? i + 1 : t;
        const int64_t lo = (dm.causal && dm.window > 0)
                               ? std::max<int64_t>(0, i - dm.window + 1)
                               : 0;
        softmax_range(s.data() + i * t, p + i * t, lo, hi, t);
      }
      detail::gemm_nn(p, vh.data(), o.data(), static_cast<int>(t),
                      static_cast<int>(t), static_cast<int>(d), false);
      T* ob = out + off;
      for (int64_t i = 0; i < t; ++i) {
        std::memcpy(ob + i * c, o.data() + i * d, sizeof(T) * d);
      }
    }
  }
}

template <typename T>
void attention_bwd_impl(const T* q, const T* k, const T* v, const T* probs,
                        const T* g, T* dq_out, T* dk_out, T* dv_out,
                        const AttnDims& dm) {
  const int64_t t = dm.t, c = dm.c;
  const int64_t d = c / dm.heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<T> qh(static_cast<size_t>(t * d));
  std::vector<T> kh(static_cast<size_t>(t * d));
  std::vector<T> vh(static_cast<size_t>(t * d));
  std::vector<T> gh(static_cast<size_t>(t * d));
  std::vector<T> dv(static_cast<size_t>(t * d));
  std::vector<T> dp(static_cast<size_t>(t * t));
  std::vector<T> ds(static_cast<size_t>(t * t));
  std::vector<T> dq(static_cast<size_t>(t * d));
  std::vector<T> dk(static_cast<size_t>(t * d));
  for (int64_t b = 0; b < dm.b; ++b) {
    for (int64_t h = 0; h < dm.heads; ++h) {
      const int64_t off = b * t * c + h * d;
      const T* p = probs + (b * dm.heads + h) * t * t;
      for (int64_t i = 0; i < t; ++i) {
        std::memcpy(qh.data() + i * d, q + off + i * c, sizeof(T) * d);
        std::memcpy(kh.data() + i * d, k + off + i * c, sizeof(T) * d);
        std::memcpy(vh.data() + i * d, v + off + i * c, sizeof(T) * d);
        std::memcpy(gh.data() + i * d, g + off + i * c, sizeof(T) * d);
      }
      // dV = P^T g ; dP = g V^T
      detail::gemm_tn(p, gh.data(), dv.data(), static_cast<int>(t),
                      static_cast<int>(t), static_cast<int>(d), false);
      detail::gemm_nt(gh.data(), vh.data(), dp.data(), static_cast<int>(t),
                      static_cast<int>(d), static_cast<int>(t), false);
      // dS = P * (dP - rowsum(dP * P))
      for (int64_t i = 0; i < t; ++i) {
        T dot = 0;
        for (int64_t j = 0; j < t; ++j) dot += dp[i * t + j] * p[i * t + j];
        for (int64_t j = 0; j < t; ++j) {
          ds[i * t + j] = p[i * t + j] * (dp[i * t + j] - dot);
        }
      }
      // dQ = dS K * scale ; dK = dS^T Q * scale
      detail::gemm_nn(ds.data(), kh.data(), dq.data(), static_cast<int>(t),
                      static_cast<int>(t), static_cast<int>(d), false);
      detail::gemm_tn(ds.data(), qh.data(), dk.data(), static_cast<int>(t),
                      static_cast<int>(t), static_cast<int>(d), false);
      for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = 0; j < d; ++j) {
          dq_out[off + i * c + j] += scale * dq[i * d + j];
          dk_out[off + i * c + j] += scale * dk[i * d + j];
          dv_out[off + i * c + j] += dv[i * d + j];
        }
      }
    }
  }
}

}  // namespace

Tensor attention_qkv(const Tensor& q, const Tensor& k, const Tensor& v,
                     int heads, bool causal, int window) {
  check_defined(q, "attention");
  detail::check_same_shape(q, k, "attention");
  detail::check_same_shape(q, v, "attention");
  if (q.rank() != 2 && q.rank() != 3) {
    fail("attention: expects [T,C] or [B,T,C], got " + shape_str(q.shape()));
  }
  if (window < 0) fail("attention: negative window");
  const int64_t b_count = q.rank() == 3 ? q.dim(0) : 1;
  const int64_t t = q.dim(q.rank() - 2);
  const int64_t c = q.dim(q.rank() - 1);
  if (heads < 1 || c % heads != 0) {
    fail("attention: feature width " + std::to_string(c) +
         " not divisible by heads " + std::to_string(heads));
  }
  AttnDims dm{b_count, t, c, heads, window, causal};
  Tensor out = Tensor::zeros(q.shape(), q.dtype());
  Tensor probs =
      Tensor::zeros({b_count, static_cast<int64_t>(heads), t, t}, q.dtype());
  if (q.dtype() == DType::F32) {
    attention_impl(q.f32(), k.f32(), v.f32(), out.f32(), probs.f32(), dm);
  } else {
    attention_impl(q.f64(), k.f64(), v.f64(), out.f64(), probs.f64(), dm);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&q, &k, &v})) {
    auto sq = tape->slot_for_input(q);
    auto sk = tape->slot_for_input(k);
    auto sv = tape->slot_for_input(v);
    auto so = tape->slot_for_output(out);
    tape->record([sq, sk, sv, so, q, k, v, probs, dm] {
      if (!so->has) return;
      Tensor dq = Tensor::zeros(q.shape(), q.dtype());
      Tensor dk = Tensor::zeros(q.shape(), q.dtype());
      Tensor dv = Tensor::zeros(q.shape(), q.dtype());
      if (q.dtype() == DType::F32) {
        attention_bwd_impl(q.f32(), k.f32(), v.f32(), probs.f32(),
                           so->grad.f32(), dq.f32(), dk.f32(), dv.f32(), dm);
      } else {
        attention_bwd_impl(q.f64(), k.f64(), v.f64(), probs.f64(),
                           so->grad.f64(), dq.f64(), dk.f64(), dv.f64(), dm);
      }
      accumulate_move(sq, std::move(dq));
      accumulate_move(sk, std::move(dk));
      accumulate_move(sv, std::move(dv));
    });
  }
  return out;
}

Tensor attention(const Tensor& x, int heads, bool causal, int window) {
  return attention_qkv(x, x, x, heads, causal, window);
}

Tensor softmax_last(const Tensor& x) {
  check_defined(x, "softmax_last");
  const int64_t v = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / v;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  auto run = [&](auto* xp, auto* op) {
    for (int64_t r = 0; r < rows; ++r) {
      softmax_prefix(xp + r * v, op + r * v, v, v);
    }
  };
  if (x.dtype() == DType::F32) {
    run(x.f32(), out.f32());
  } else {
    run(x.f64(), out.f64());
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    tape->record([sx, so, out, rows, v] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(out.shape(), out.dtype());
      auto run_bwd = [&](auto* pp, auto* gp, auto* dp) {
        using T = std::remove_const_t<std::remove_pointer_t<decltype(pp)>>;
        for (int64_t r = 0; r < rows; ++r) {
          const T* p = pp + r * v;
          const T* g = gp + r * v;
          T dot = 0;
          for (int64_t j = 0; j < v; ++j) dot += g[j] * p[j];
          T* d = dp + r * v;
          for (int64_t j = 0; j < v; ++j) d[j] = p[j] * (g[j] - dot);
        }
      };
      if (out.dtype() == DType::F32) {
        run_bwd(out.f32(), so->grad.f32(), dx.f32());
      } else {
        run_bwd(out.f64(), so->grad.f64(), dx.f64());
      }
      accumulate_move(sx, std::move(dx));
    });
  }
  return out;
}

Tensor cross_entropy_rows(const Tensor& logits,
                          const std::vector<int64_t>& targets,
                          const std::vector<float>* weights) {
  check_defined(logits, "cross_entropy_rows");
  if (logits.rank() != 2) {
    fail("cross_entropy_rows: expects [N,V], got " +
         shape_str(logits.shape()));
  }
  const int64_t n = logits.dim(0);
  const int64_t v = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) {
    fail("cross_entropy_rows: " + std::to_string(targets.size()) +
         " targets for " + std::to_string(n) + " rows");
  }
  if (weights && static_cast<int64_t>(weights->size()) != n) {
    fail("cross_entropy_rows: weight count mismatch");
  }
  double weight_total = 0;
  for (int64_t r = 0; r < n; ++r) {
    if (targets[static_cast<size_t>(r)] < 0 ||
        targets[static_cast<size_t>(r)] >= v) {
      fail("cross_entropy_rows: target " +
           std::to_string(targets[static_cast<size_t>(r)]) +
           " outside vocabulary of " + std::to_string(v));
    }
    weight_total += weights ? (*weights)[static_cast<size_t>(r)] : 1.0;
  }
  if (weight_total <= 0) fail("cross_entropy_rows: no positive weights");

  double total = 0;
  auto lse_row = [&](auto* row) -> double {
    using T = std::remove_const_t<std::remove_pointer_t<decltype(row)>>;
    T mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0;
    for (int64_t j = 0; j < v; ++j) {
      z += std::exp(static_cast<double>(row[j] - mx));
    }
    return static_cast<double>(mx) + std::log(z);
  };
  for (int64_t r = 0; r < n; ++r) {
    const double w = weights ? (*weights)[static_cast<size_t>(r)] : 1.0;
    if (w == 0) continue;
    double lse, target_logit;
    if (logits.dtype() == DType::F32) {
      lse = lse_row(logits.f32() + r * v);
      target_logit = logits.f32()[r * v + targets[static_cast<size_t>(r)]];
    } else {
      lse = lse_row(logits.f64() + r * v);
      target_logit = logits.f64()[r * v + targets[static_cast<size_t>(r)]];
    }
    total += w * (lse - target_logit);
  }
  Tensor out = Tensor::scalar(total / weight_total, logits.dtype());

  if (Tape* tape = Tape::active(); tape && tape->wants({&logits})) {
    auto sl = tape->slot_for_input(logits);
    auto so = tape->slot_for_output(out);
    std::vector<float> w_copy;
    if (weights) w_copy = *weights;
    const bool has_w = weights != nullptr;
    tape->record(
        [sl, so, logits, targets, w_copy, has_w, weight_total, n, v] {
          if (!so->has) return;
          const double gscale = so->grad.at(0) / weight_total;
          Tensor dl = Tensor::zeros(logits.shape(), logits.dtype());
          auto run = [&](auto* lp, auto* dp) {
            using T = std::remove_const_t<std::remove_pointer_t<decltype(lp)>>;
            std::vector<T> prob(static_cast<size_t>(v));
            for (int64_t r = 0; r < n; ++r) {
              const double w = has_w ? w_copy[static_cast<size_t>(r)] : 1.0;
              if (w == 0) continue;  // untouched rows keep exact zeros
              softmax_prefix(lp + r * v, prob.data(), v, v);
              const T coeff = static_cast<T>(gscale * w);
              T* drow = dp + r * v;
              for (int64_t j = 0; j < v; ++j) drow[j] = coeff * prob[j];
              drow[targets[static_cast<size_t>(r)]] -= coeff;
            }
          };
          if (logits.dtype() == DType::F32) {
            run(logits.f32(), dl.f32());
          } else {
            run(logits.f64(), dl.f64());
          }
          accumulate_move(sl, std::move(dl));
        });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, int64_t target) {
  check_defined(logits, "softmax_cross_entropy");
  if (logits.rank() != 1) {
    fail("softmax_cross_entropy: expects rank-1 logits, got " +
         shape_str(logits.shape()));
  }
  if (target < 0 || target >= logits.dim(0)) {
    fail("softmax_cross_entropy: target " + std::to_string(target) +
         " outside vocabulary of " + std::to_string(logits.dim(0)));
  }
  Tensor rows = reshape(logits, {1, logits.dim(0)});
  return cross_entropy_rows(rows, {target});
}

}  // namespace teco::nn
