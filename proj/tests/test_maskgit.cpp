#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "teco/maskgit.hpp"
#include "teco/ops.hpp"
#include "testutil.hpp"

using namespace teco;
using namespace teco::nn;

namespace {

// Predictor with position-independent fixed logits.
mg::TokenPredictor constant_model(std::vector<double> logits) {
  return [logits](const TokenGrid& grid) {
    const int64_t v = static_cast<int64_t>(logits.size());
    Tensor out = Tensor::zeros({grid.positions(), v}, DType::F64);
    for (int64_t p = 0; p < grid.positions(); ++p) {
      for (int64_t j = 0; j < v; ++j) out.set(p * v + j, logits[static_cast<size_t>(j)]);
    }
    return out;
  };
}

}  // namespace

TEST_CASE("gamma: endpoint values, strict decrease, domain") {
  CHECK(mg::gamma(0.0) == 1.0);
  CHECK(std::abs(mg::gamma(2.0 / 3.0) - 0.5) < 1e-12);
  CHECK(std::abs(mg::gamma(0.5) - std::numbers::sqrt2 / 2.0) < 1e-12);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    double t1 = rng.next_double();
    double t2 = rng.next_double();
    if (t1 == t2) continue;
    if (t1 > t2) std::swap(t1, t2);
    CHECK(mg::gamma(t1) > mg::gamma(t2));
  }
  CHECK_THROWS_AS(mg::gamma(1.0), Error);
  CHECK_THROWS_AS(mg::gamma(-0.1), Error);
}

TEST_CASE("training mask: exact counts from the schedule") {
  Rng rng(2);
  auto m1 = mg::sample_training_mask(16, 16, 2.0 / 3.0, rng);
  int64_t count = 0;
  for (uint8_t b : m1) count += b;
  CHECK(count == 128);

  auto m2 = mg::sample_training_mask(4, 4, 0.0, rng);
  count = 0;
  for (uint8_t b : m2) count += b;
  CHECK(count == 16);  // gamma(0)=1 masks everything

  auto m3 = mg::sample_training_mask(4, 4, 0.9, rng);
  count = 0;
  for (uint8_t b : m3) count += b;
  CHECK(count == 3);  // ceil(16*cos(0.45pi)) = ceil(2.5029) = 3

  // N = ceil(gamma * H * W) against direct evaluation on random draws
  for (int i = 0; i < 50; ++i) {
    const int64_t h = 1 + static_cast<int64_t>(rng.next_below(12));
    const int64_t w = 1 + static_cast<int64_t>(rng.next_below(12));
    const double t = rng.next_double();
    auto m = mg::sample_training_mask(h, w, t, rng);
    int64_t n = 0;
    for (uint8_t b : m) n += b;
    CHECK(n == mg::masked_count_for(t, h * w));
    const double raw = std::cos(std::numbers::pi * t / 2.0) *
                       static_cast<double>(h * w);
    CHECK(std::abs(static_cast<double>(n) - raw) < 1.0 + 1e-9);
    CHECK(static_cast<double>(n) >= raw - 1e-6);
  }
}

TEST_CASE("masked loss: perfect model, uniform model, enumeration oracle") {
  TokenGrid grid(1, 2);
  grid.indices = {1, 0};
  grid.mask = {1, 1};

  Tensor perfect = Tensor::zeros({2, 2}, DType::F64);
  perfect.set(0 * 2 + 1, 50.0);
  perfect.set(1 * 2 + 0, 50.0);
  CHECK(mg::masked_cross_entropy(perfect, grid).at(0) ==
        doctest::Approx(0.0).epsilon(1e-9));

  Tensor uniform = Tensor::zeros({2, 5}, DType::F64);
  TokenGrid g5(1, 2);
  g5.indices = {3, 2};
  g5.mask = {1, 1};
  CHECK(mg::masked_cross_entropy(uniform, g5).at(0) ==
        doctest::Approx(std::log(5.0)));

  // hand-built 2-position, V=2 case: mean of the two masked CE terms
  Tensor l = Tensor::from_doubles({2, 2}, {0.2, -0.4, 1.5, 0.3});
  auto ce = [](double a, double b, int64_t target) {
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    return lse - (target == 0 ? a : b);
  };
  const double want = 0.5 * (ce(0.2, -0.4, 1) + ce(1.5, 0.3, 0));
  CHECK(mg::masked_cross_entropy(l, grid).at(0) == doctest::Approx(want));

  // only the second position masked: gradient at the unmasked row is 0
  TokenGrid half(1, 2);
  half.indices = {1, 0};
  half.mask = {0, 1};
  Tensor l2 = l.clone();
  l2.set_requires_grad(true);
  {
    Tape tape;
    Tensor loss = mg::masked_cross_entropy(l2, half);
    tape.backward(loss);
    Tensor g = tape.grad(l2);
    CHECK(g.at(0) == 0.0);
    CHECK(g.at(1) == 0.0);
    CHECK(g.at(2) != 0.0);
  }

  TokenGrid unmasked(1, 2);
  unmasked.indices = {0, 0};
  CHECK_THROWS_AS(mg::masked_cross_entropy(l, unmasked), Error);
}

TEST_CASE("top_k_filter: identity at k=V, argmax at k=1, zeroed tail") {
  Tensor l = Tensor::from_doubles({3}, {3.0, 2.0, 1.0});
  Tensor same = mg::top_k_filter(l, 3);
  for (int i = 0; i < 3; ++i) CHECK(same.at(i) == l.at(i));

  Tensor k1 = mg::top_k_filter(l, 1);
  CHECK(k1.at(0) == 3.0);
  CHECK(std::isinf(k1.at(1)));
  CHECK(std::isinf(k1.at(2)));

  Tensor k2 = mg::top_k_filter(l, 2);
  Tensor p = softmax_last(k2);
  CHECK(p.at(2) == 0.0);
  CHECK(p.at(0) + p.at(1) == doctest::Approx(1.0));

  CHECK_THROWS_AS(mg::top_k_filter(l, 0), Error);
  CHECK_THROWS_AS(mg::top_k_filter(l, 4), Error);
}

TEST_CASE("decoding regimes: exit contract and exact forward counts") {
  auto model = constant_model({0.3, 1.0, -0.5, 0.1});
  mg::SamplerConfig cfg;
  cfg.temperature = 1.0;

  {
    mg::DecodeStats stats;
    Rng rng(7);
    cfg.regime = mg::Regime::autoregressive;
    TokenGrid g = mg::decode(model, 16, 16, 4, cfg, rng, &stats);
    CHECK(stats.forward_calls == 256);
    CHECK(g.fully_unmasked());
    for (int32_t t : g.indices) CHECK((t >= 0 && t < 4));
  }
  {
    mg::DecodeStats stats;
    Rng rng(7);
    cfg.regime = mg::Regime::independent;
    TokenGrid g = mg::decode(model, 16, 16, 4, cfg, rng, &stats);
    CHECK(stats.forward_calls == 1);
    CHECK(g.fully_unmasked());
  }
  {
    mg::DecodeStats stats;
    Rng rng(7);
    cfg.regime = mg::Regime::draft_and_revise;
    cfg.chunk_size = 8;
    cfg.revise_rounds = 2;
    TokenGrid g = mg::decode(model, 16, 16, 4, cfg, rng, &stats);
    CHECK(stats.forward_calls == 256 / 8 + 2);
    CHECK(stats.forward_calls == mg::expected_forward_calls(cfg, 256));
    CHECK(g.fully_unmasked());
  }
  {
    // 16 positions, chunk 8, no revise -> 2 forward passes
    mg::DecodeStats stats;
    Rng rng(9);
    cfg.regime = mg::Regime::draft_and_revise;
    cfg.chunk_size = 8;
    cfg.revise_rounds = 0;
    TokenGrid g = mg::decode(model, 4, 4, 4, cfg, rng, &stats);
    CHECK(stats.forward_calls == 2);
    CHECK(g.fully_unmasked());
  }
  {
    mg::DecodeStats stats;
    Rng rng(7);
    cfg.regime = mg::Regime::maskgit_confidence;
    cfg.confidence_steps = 8;
    TokenGrid g = mg::decode(model, 16, 16, 4, cfg, rng, &stats);
    CHECK(stats.forward_calls == 8);
    CHECK(g.fully_unmasked());
  }
}

TEST_CASE("confidence decoding with steps=1 equals the independent regime") {
  auto model = constant_model({0.0, 0.4, -0.2});
  mg::SamplerConfig cfg;
  cfg.temperature = 1.0;
  cfg.confidence_steps = 1;
  Rng r1(123), r2(123);
  cfg.regime = mg::Regime::maskgit_confidence;
  TokenGrid a = mg::decode(model, 4, 4, 3, cfg, r1);
  cfg.regime = mg::Regime::independent;
  TokenGrid b = mg::decode(model, 4, 4, 3, cfg, r2);
  CHECK(a.indices == b.indices);
}

TEST_CASE("temperature 0 plus fixed seed is deterministic") {
  auto model = constant_model({0.3, 1.0, -0.5, 0.1});
  for (auto regime :
       {mg::Regime::maskgit_confidence, mg::Regime::draft_and_revise,
        mg::Regime::independent, mg::Regime::autoregressive}) {
    mg::SamplerConfig cfg;
    cfg.regime = regime;
    cfg.temperature = 0.0;
    Rng r1(5), r2(5);
    TokenGrid a = mg::decode(model, 6, 6, 4, cfg, r1);
    TokenGrid b = mg::decode(model, 6, 6, 4, cfg, r2);
    CHECK(a.indices == b.indices);
    // argmax sampling under a constant model fills with the argmax token
    for (int32_t t : a.indices) CHECK(t == 1);
  }
}

TEST_CASE("autoregressive sampling matches chain-rule enumeration") {
  // 2 positions, V=2. p(z0=1)=0.7; p(z1=1|z0) = 0.8 if z0=1 else 0.25.
  auto logit_pair = [](double p1) {
    return std::array<double, 2>{std::log1p(-p1) , std::log(p1)};
  };
  mg::TokenPredictor model = [&](const TokenGrid& grid) {
    Tensor out = Tensor::zeros({2, 2}, DType::F64);
    auto r0 = logit_pair(0.7);
    out.set(0, r0[0]);
    out.set(1, r0[1]);
    double p1;
    if (!grid.mask[0]) {
      p1 = grid.indices[0] == 1 ? 0.8 : 0.25;
    } else {
      p1 = 0.5;
    }
    auto r1 = logit_pair(p1);
    out.set(2, r1[0]);
    out.set(3, r1[1]);
    return out;
  };
  mg::SamplerConfig cfg;
  cfg.regime = mg::Regime::autoregressive;
  cfg.temperature = 1.0;
  const int draws = 10000;
  int counts[2][2] = {{0, 0}, {0, 0}};
  Rng rng(31337);
  for (int i = 0; i < draws; ++i) {
    Rng draw = rng.split(static_cast<uint64_t>(i));
    TokenGrid g = mg::decode(model, 1, 2, 2, cfg, draw);
    counts[g.indices[0]][g.indices[1]]++;
  }
  const double expect[2][2] = {{0.3 * 0.75, 0.3 * 0.25},
                               {0.7 * 0.2, 0.7 * 0.8}};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double p = expect[a][b];
      const double sigma = std::sqrt(p * (1 - p) * draws);
      CHECK(std::abs(counts[a][b] - p * draws) <= 3.0 * sigma);
    }
  }
}
