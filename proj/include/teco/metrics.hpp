#pragma once

// Image/video quality metrics: PSNR with a zero-MSE sentinel, mean local
// SSIM (7x7 uniform window on ITU-R 601 luma), a Frechet distance between
// Gaussian fits of video embeddings, and per-offset horizon curves.

#include <cstdint>
#include <vector>

#include "teco/tensor.hpp"

namespace teco::metrics {

struct FrameView {
  const uint8_t* data = nullptr;  // h*w*3 RGB bytes
  int64_t h = 0;
  int64_t w = 0;
};

struct VideoView {
  const uint8_t* data = nullptr;  // t*h*w*3
  int64_t t = 0;
  int64_t h = 0;
  int64_t w = 0;
  FrameView frame(int64_t i) const {
    return FrameView{data + i * h * w * 3, h, w};
  }
};

// 10*log10(255^2 / MSE); identical frames report the 99.0 dB sentinel.
double psnr(FrameView a, FrameView b);

// Mean local SSIM on luma; C1=(0.01*255)^2, C2=(0.03*255)^2, 7x7 uniform
// window over valid positions. Frames must be at least 7x7.
double ssim(FrameView a, FrameView b);

struct FeatureStats {
  nn::Tensor mean;  // [D]
  nn::Tensor cov;   // [D,D], symmetric
  int64_t n = 0;
};

// Two-pass mean/covariance (unbiased, N-1) over feature rows [N,D]; N >= 2.
FeatureStats feature_stats(const nn::Tensor& features);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); the matrix square root is
// evaluated through symmetric eigendecompositions with negative eigenvalues
// clamped to zero.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);
double frechet_proxy(const nn::Tensor& features_a, const nn::Tensor& features_b);

// Cyclic Jacobi eigendecomposition of a symmetric matrix [D,D].
// eigvecs columns are the eigenvectors: m = V diag(vals) V^T.
void symmetric_eigen(const nn::Tensor& m, std::vector<double>* eigvals,
                     nn::Tensor* eigvecs);

enum class FrameMetric { kPsnr, kSsim };

struct HorizonSeries {
  std::vector<double> mean;    // per predicted-frame offset
  std::vector<double> stddev;
  std::vector<int64_t> count;
};

// Metric per predicted-frame offset, averaged over the batch. Every
// prediction must have the same length as its ground truth.
HorizonSeries horizon_curves(const std::vector<VideoView>& predictions,
                             const std::vector<VideoView>& ground_truth,
                             FrameMetric metric);

}  // namespace teco::metrics
