#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "teco/metrics.hpp"
#include "teco/rng.hpp"

using namespace teco;
using namespace teco::metrics;
using nn::DType;
using nn::Tensor;

namespace {

std::vector<uint8_t> random_frame(int64_t h, int64_t w, Rng& rng) {
  std::vector<uint8_t> f(static_cast<size_t>(h * w * 3));
  for (auto& b : f) b = static_cast<uint8_t>(rng.next_below(256));
  return f;
}

FrameView view(const std::vector<uint8_t>& f, int64_t h, int64_t w) {
  return FrameView{f.data(), h, w};
}

}  // namespace

TEST_CASE("psnr: sentinel, extremes, high-precision recomputation") {
  Rng rng(1);
  auto a = random_frame(16, 16, rng);
  CHECK(psnr(view(a, 16, 16), view(a, 16, 16)) == 99.0);

  std::vector<uint8_t> zero(16 * 16 * 3, 0), full(16 * 16 * 3, 255);
  CHECK(psnr(view(zero, 16, 16), view(full, 16, 16)) ==
        doctest::Approx(0.0).epsilon(1e-12));

  auto b = random_frame(16, 16, rng);
  long double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i];
    mse += d * d;
  }
  mse /= a.size();
  const double want =
      static_cast<double>(10.0L * log10l(255.0L * 255.0L / mse));
  CHECK(std::abs(psnr(view(a, 16, 16), view(b, 16, 16)) - want) < 1e-6);

  std::vector<uint8_t> small(8 * 8 * 3, 0);
  CHECK_THROWS_AS(psnr(view(a, 16, 16), view(small, 8, 8)), nn::Error);
}

TEST_CASE("ssim: identity, constant-image closed form, symmetry") {
  Rng rng(2);
  auto a = random_frame(16, 16, rng);
  CHECK(ssim(view(a, 16, 16), view(a, 16, 16)) == doctest::Approx(1.0));

  std::vector<uint8_t> zero(16 * 16 * 3, 0), full(16 * 16 * 3, 255);
  const double c1 = 0.01 * 255 * 0.01 * 255;
  const double c2 = 0.03 * 255 * 0.03 * 255;
  const double mua = 0.0, mub = 255.0;
  const double want = ((2 * mua * mub + c1) * (2 * 0 + c2)) /
                      ((mua * mua + mub * mub + c1) * (0 + 0 + c2));
  CHECK(ssim(view(zero, 16, 16), view(full, 16, 16)) ==
        doctest::Approx(want).epsilon(1e-9));

  auto b = random_frame(16, 16, rng);
  CHECK(ssim(view(a, 16, 16), view(b, 16, 16)) ==
        ssim(view(b, 16, 16), view(a, 16, 16)));

  std::vector<uint8_t> tiny(6 * 6 * 3, 0);
  CHECK_THROWS_AS(ssim(view(tiny, 6, 6), view(tiny, 6, 6)), nn::Error);
}

TEST_CASE("symmetric eigen: reconstruction on random symmetric matrices") {
  Rng rng(3);
  for (int64_t d : {2, 3, 8}) {
    Tensor m = Tensor::zeros({d, d}, DType::F64);
    for (int64_t i = 0; i < d; ++i) {
      for (int64_t j = i; j < d; ++j) {
        const double v = rng.next_normal();
        m.set(i * d + j, v);
        m.set(j * d + i, v);
      }
    }
    std::vector<double> vals;
    Tensor vecs;
    symmetric_eigen(m, &vals, &vecs);
    // reconstruct V diag V^T
    for (int64_t i = 0; i < d; ++i) {
      for (int64_t j = 0; j < d; ++j) {
        double acc = 0;
        for (int64_t k = 0; k < d; ++k) {
          acc += vecs.at(i * d + k) * vals[static_cast<size_t>(k)] *
                 vecs.at(j * d + k);
        }
        CHECK(acc == doctest::Approx(m.at(i * d + j)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("frechet: identical sets, identity-covariance closed form, oracle") {
  Rng rng(4);
  Tensor feats = Tensor::randn({24, 6}, rng, 1.0, DType::F64);
  CHECK(std::abs(frechet_proxy(feats, feats)) < 1e-4);

  // synthetic stats: S1 = S2 = I -> distance = ||d||^2 exactly
  const int64_t d = 5;
  FeatureStats s1, s2;
  s1.mean = Tensor::zeros({d}, DType::F64);
  s2.mean = Tensor::zeros({d}, DType::F64);
  double want = 0;
  for (int64_t i = 0; i < d; ++i) {
    const double dv = 0.3 * static_cast<double>(i + 1);
    s2.mean.set(i, dv);
    want += dv * dv;
  }
  s1.cov = Tensor::zeros({d, d}, DType::F64);
  s2.cov = Tensor::zeros({d, d}, DType::F64);
  for (int64_t i = 0; i < d; ++i) {
    s1.cov.set(i * d + i, 1.0);
    s2.cov.set(i * d + i, 1.0);
  }
  s1.n = s2.n = 10;
  CHECK(std::abs(frechet_distance(s1, s2) - want) < 1e-8);

  // 2-d synthetic Gaussians vs a direct evaluation of the closed form:
  // diagonal covariances -> Tr(S1+S2-2 sqrt(S1 S2)) = sum (sqrt(a)-sqrt(b))^2
  FeatureStats g1, g2;
  g1.mean = Tensor::from_doubles({2}, {0.5, -1.0});
  g2.mean = Tensor::from_doubles({2}, {-0.25, 0.75});
  g1.cov = Tensor::from_doubles({2, 2}, {2.0, 0.0, 0.0, 0.5});
  g2.cov = Tensor::from_doubles({2, 2}, {1.0, 0.0, 0.0, 3.0});
  g1.n = g2.n = 10;
  const double mean_term = 0.75 * 0.75 + 1.75 * 1.75;
  const double tr_term =
      (std::sqrt(2.0) - 1.0) * (std::sqrt(2.0) - 1.0) +
      (std::sqrt(0.5) - std::sqrt(3.0)) * (std::sqrt(0.5) - std::sqrt(3.0));
  CHECK(frechet_distance(g1, g2) ==
        doctest::Approx(mean_term + tr_term).epsilon(1e-6));

  // nonnegative on random stats
  Tensor fa = Tensor::randn({30, 4}, rng, 1.0, DType::F64);
  Tensor fb = Tensor::randn({30, 4}, rng, 1.3, DType::F64);
  CHECK(frechet_proxy(fa, fb) >= 0.0);

  Tensor one = Tensor::randn({1, 4}, rng, 1.0, DType::F64);
  CHECK_THROWS_AS(frechet_proxy(one, fb), nn::Error);
}

TEST_CASE("horizon curves: perfect prediction, offset-0, monotone noise") {
  Rng rng(5);
  const int64_t t = 6, h = 16, w = 16;
  std::vector<uint8_t> truth(static_cast<size_t>(t * h * w * 3));
  for (auto& b : truth) b = static_cast<uint8_t>(rng.next_below(256));

  VideoView tv{truth.data(), t, h, w};
  // prediction equal to truth -> flat sentinel curve
  HorizonSeries flat = horizon_curves({tv}, {tv}, FrameMetric::kPsnr);
  for (int64_t i = 0; i < t; ++i) {
    CHECK(flat.mean[static_cast<size_t>(i)] == 99.0);
    CHECK(flat.count[static_cast<size_t>(i)] == 1);
  }

  // growing noise -> strictly decreasing PSNR curve
  std::vector<uint8_t> noisy(truth);
  Rng nrng(6);
  for (int64_t ti = 0; ti < t; ++ti) {
    const int64_t amp = 4 + 18 * ti;
    for (int64_t i = 0; i < h * w * 3; ++i) {
      const int64_t idx = ti * h * w * 3 + i;
      const int64_t delta =
          static_cast<int64_t>(nrng.next_below(static_cast<uint64_t>(2 * amp + 1))) - amp;
      noisy[static_cast<size_t>(idx)] = static_cast<uint8_t>(
          std::clamp<int64_t>(truth[static_cast<size_t>(idx)] + delta, 0, 255));
    }
  }
  VideoView nv{noisy.data(), t, h, w};
  HorizonSeries decay = horizon_curves({nv}, {tv}, FrameMetric::kPsnr);
  for (int64_t i = 1; i < t; ++i) {
    CHECK(decay.mean[static_cast<size_t>(i)] <
          decay.mean[static_cast<size_t>(i - 1)]);
  }
  // offset-0 value equals the single-frame metric on first frames
  CHECK(decay.mean[0] ==
        doctest::Approx(psnr(nv.frame(0), tv.frame(0))));

  // length mismatch rejected
  VideoView shorter{noisy.data(), t - 1, h, w};
  CHECK_THROWS_AS(horizon_curves({shorter}, {tv}, FrameMetric::kPsnr),
                  nn::Error);
}
