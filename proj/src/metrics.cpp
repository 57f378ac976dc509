#include "teco/metrics.hpp"

#include <cmath>

#include "teco/detail/kernels_ref.hpp"

namespace teco::metrics {

using nn::DType;
using nn::Tensor;

namespace {

void check_pair(FrameView a, FrameView b, const char* op) {
  if (a.h != b.h || a.w != b.w) {
    nn::fail(std::string(op) + ": frame shape mismatch " +
             std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " +
             std::to_string(b.h) + "x" + std::to_string(b.w));
  }
  if (!a.data || !b.data || a.h < 1 || a.w < 1) {
    nn::fail(std::string(op) + ": empty frame");
  }
}

}  // namespace

double psnr(FrameView a, FrameView b) {
  check_pair(a, b, "psnr");
  const int64_t n = a.h * a.w * 3;
  double mse = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(n);
  if (mse == 0.0) return 99.0;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(FrameView a, FrameView b) {
  check_pair(a, b, "ssim");
  constexpr int kWin = 7;
  if (a.h < kWin || a.w < kWin) {
    nn::fail("ssim: frames smaller than the 7x7 window");
  }
  const int64_t h = a.h, w = a.w;
  std::vector<double> la(static_cast<size_t>(h * w));
  std::vector<double> lb(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) {
    const uint8_t* pa = a.data + i * 3;
    const uint8_t* pb = b.data + i * 3;
    la[static_cast<size_t>(i)] = 0.299 * pa[0] + 0.587 * pa[1] + 0.114 * pa[2];
    lb[static_cast<size_t>(i)] = 0.299 * pb[0] + 0.587 * pb[1] + 0.114 * pb[2];
  }
  constexpr double c1 = (0.01 * 255) * (0.01 * 255);
  constexpr double c2 = (0.03 * 255) * (0.03 * 255);
  constexpr double inv_n = 1.0 / (kWin * kWin);
  double total = 0;
  int64_t windows = 0;
  for (int64_t y = 0; y + kWin <= h; ++y) {
    for (int64_t x = 0; x + kWin <= w; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < kWin; ++dy) {
        for (int dx = 0; dx < kWin; ++dx) {
          const double va = la[static_cast<size_t>((y + dy) * w + x + dx)];
          const double vb = lb[static_cast<size_t>((y + dy) * w + x + dx)];
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      }
      const double mua = sa * inv_n;
      const double mub = sb * inv_n;
      const double vara = saa * inv_n - mua * mua;
      const double varb = sbb * inv_n - mub * mub;
      const double cov = sab * inv_n - mua * mub;
      const double num = (2 * mua * mub + c1) * (2 * cov + c2);
      const double den = (mua * mua + mub * mub + c1) * (vara + varb + c2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

FeatureStats feature_stats(const Tensor& features) {
  if (features.rank() != 2 || features.dim(0) < 2) {
    nn::fail("feature_stats: expects [N>=2, D] features, got " +
             nn::shape_str(features.shape()));
  }
  const int64_t n = features.dim(0);
  const int64_t d = features.dim(1);
  FeatureStats s;
  s.n = n;
  s.mean = Tensor::zeros({d}, DType::F64);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      s.mean.set(j, s.mean.at(j) + features.at(i * d + j));
    }
  }
  for (int64_t j = 0; j < d; ++j) s.mean.set(j, s.mean.at(j) / n);
  s.cov = Tensor::zeros({d, d}, DType::F64);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      const double cj = features.at(i * d + j) - s.mean.at(j);
      for (int64_t k = j; k < d; ++k) {
        const double ck = features.at(i * d + k) - s.mean.at(k);
        s.cov.set(j * d + k, s.cov.at(j * d + k) + cj * ck);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (int64_t j = 0; j < d; ++j) {
    for (int64_t k = j; k < d; ++k) {
      const double v = s.cov.at(j * d + k) * inv;
      s.cov.set(j * d + k, v);
      s.cov.set(k * d + j, v);
    }
  }
  return s;
}

void symmetric_eigen(const Tensor& m, std::vector<double>* eigvals,
                     Tensor* eigvecs) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    nn::fail("symmetric_eigen: expects a square matrix");
  }
  const int64_t d = m.dim(0);
  Tensor a = m.astype(DType::F64);
  Tensor v = Tensor::zeros({d, d}, DType::F64);
  for (int64_t i = 0; i < d; ++i) v.set(i * d + i, 1.0);

  auto at = [&](int64_t r, int64_t c) { return a.at(r * d + c); };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int64_t p = 0; p < d; ++p) {
      for (int64_t q = p + 1; q < d; ++q) off += at(p, q) * at(p, q);
    }
    if (off < 1e-24) break;
    for (int64_t p = 0; p < d; ++p) {
      for (int64_t q = p + 1; q < d; ++q) {
        const double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double app = at(p, p);
        const double aqq = at(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int64_t k = 0; k < d; ++k) {
          const double akp = at(k, p);
          const double akq = at(k, q);
          a.set(k * d + p, c * akp - s * akq);
          a.set(k * d + q, s * akp + c * akq);
        }
        for (int64_t k = 0; k < d; ++k) {
          const double apk = at(p, k);
          const double aqk = at(q, k);
          a.set(p * d + k, c * apk - s * aqk);
          a.set(q * d + k, s * apk + c * aqk);
        }
        for (int64_t k = 0; k < d; ++k) {
          const double vkp = v.at(k * d + p);
          const double vkq = v.at(k * d + q);
          v.set(k * d + p, c * vkp - s * vkq);
          v.set(k * d + q, s * vkp + c * vkq);
        }
      }
    }
  }
  eigvals->resize(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i) (*eigvals)[static_cast<size_t>(i)] = at(i, i);
  if (eigvecs) *eigvecs = v;
}

namespace {

// B = sqrtm(S): symmetric eigendecomposition with negatives clamped to 0.
Tensor sqrtm_psd(const Tensor& s) {
  const int64_t d = s.dim(0);
  std::vector<double> vals;
  Tensor vecs;
  symmetric_eigen(s, &vals, &vecs);
  Tensor out = Tensor::zeros({d, d}, DType::F64);
  for (int64_t i = 0; i < d; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      double acc = 0;
      for (int64_t k = 0; k < d; ++k) {
        const double lam = std::max(vals[static_cast<size_t>(k)], 0.0);
        acc += vecs.at(i * d + k) * std::sqrt(lam) * vecs.at(j * d + k);
      }
      out.set(i * d + j, acc);
    }
  }
  return out;
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.shape() != b.mean.shape()) {
    nn::fail("frechet_distance: feature widths disagree");
  }
  const int64_t d = a.mean.dim(0);
  double mean_term = 0;
  for (int64_t i = 0; i < d; ++i) {
    const double dv = a.mean.at(i) - b.mean.at(i);
    mean_term += dv * dv;
  }
  // Tr(sqrtm(S1 S2)) computed as Tr(sqrtm(sqrt(S1) S2 sqrt(S1))), which is
  // symmetric PSD, so the eigenvalue route applies.
  Tensor s1h = sqrtm_psd(a.cov);
  Tensor tmp = Tensor::zeros({d, d}, DType::F64);
  Tensor mid = Tensor::zeros({d, d}, DType::F64);
  kern::ref::gemm_nn(s1h.f64(), b.cov.astype(DType::F64).f64(), tmp.f64(),
                     static_cast<int>(d), static_cast<int>(d),
                     static_cast<int>(d), false);
  kern::ref::gemm_nn(tmp.f64(), s1h.f64(), mid.f64(), static_cast<int>(d),
                     static_cast<int>(d), static_cast<int>(d), false);
  // symmetrize against rounding before the eigensolve
  for (int64_t i = 0; i < d; ++i) {
    for (int64_t j = i + 1; j < d; ++j) {
      const double v = 0.5 * (mid.at(i * d + j) + mid.at(j * d + i));
      mid.set(i * d + j, v);
      mid.set(j * d + i, v);
    }
  }
  std::vector<double> vals;
  symmetric_eigen(mid, &vals, nullptr);
  double tr_sqrt = 0;
  for (double v : vals) tr_sqrt += std::sqrt(std::max(v, 0.0));
  double tr = 0;
  for (int64_t i = 0; i < d; ++i) {
    tr += a.cov.at(i * d + i) + b.cov.at(i * d + i);
  }
  return mean_term + tr - 2.0 * tr_sqrt;
}

double frechet_proxy(const Tensor& features_a, const Tensor& features_b) {
  return frechet_distance(feature_stats(features_a),
                          feature_stats(features_b));
}

HorizonSeries horizon_curves(const std::vector<VideoView>& predictions,
                             const std::vector<VideoView>& ground_truth,
                             FrameMetric metric) {
  if (predictions.size() != ground_truth.size() || predictions.empty()) {
    nn::fail("horizon_curves: prediction/truth batch sizes disagree");
  }
  int64_t max_t = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].t != ground_truth[i].t) {
      nn::fail("horizon_curves: length mismatch at video " +
               std::to_string(i));
    }
    max_t = std::max(max_t, predictions[i].t);
  }
  HorizonSeries out;
  out.mean.assign(static_cast<size_t>(max_t), 0.0);
  out.stddev.assign(static_cast<size_t>(max_t), 0.0);
  out.count.assign(static_cast<size_t>(max_t), 0);
  std::vector<std::vector<double>> values(static_cast<size_t>(max_t));
  for (size_t i = 0; i < predictions.size(); ++i) {
    for (int64_t t = 0; t < predictions[i].t; ++t) {
      const double v = metric == FrameMetric::kPsnr
                           ? psnr(predictions[i].frame(t),
                                  ground_truth[i].frame(t))
                           : ssim(predictions[i].frame(t),
                                  ground_truth[i].frame(t));
      values[static_cast<size_t>(t)].push_back(v);
    }
  }
  for (int64_t t = 0; t < max_t; ++t) {
    const auto& vs = values[static_cast<size_t>(t)];
    if (vs.empty()) continue;
    double mean = 0;
    for (double v : vs) mean += v;
    mean /= static_cast<double>(vs.size());
    double var = 0;
    for (double v : vs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vs.size());
    out.mean[static_cast<size_t>(t)] = mean;
    out.stddev[static_cast<size_t>(t)] = std::sqrt(var);
    out.count[static_cast<size_t>(t)] = static_cast<int64_t>(vs.size());
  }
  return out;
}

}  // namespace teco::metrics
