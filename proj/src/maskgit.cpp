#include "teco/maskgit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "teco/ops.hpp"
#include "teco/tape.hpp"

namespace teco::mg {

using nn::Tensor;

double gamma(double t) {
  if (!(t >= 0.0 && t < 1.0)) {
    nn::fail("gamma: t must lie in [0,1), got " + std::to_string(t));
  }
  return std::cos(std::numbers::pi * t / 2.0);
}

namespace {

// Schedule count with the t=1 endpoint allowed (used by samplers).
// gamma*P is snapped to the nearest integer when representation error is
// the only thing keeping it off one (cos(pi/3) != 0.5 in double), so the
// ceiling matches exact arithmetic.
int64_t schedule_count(double t, int64_t positions) {
  if (t >= 1.0) return 0;
  const double raw =
      std::cos(std::numbers::pi * t / 2.0) * static_cast<double>(positions);
  const double nearest = std::round(raw);
  if (std::abs(raw - nearest) < 1e-9) return static_cast<int64_t>(nearest);
  return static_cast<int64_t>(std::ceil(raw));
}

}  // namespace

int64_t masked_count_for(double t, int64_t positions) {
  if (!(t >= 0.0 && t < 1.0)) {
    nn::fail("masked_count_for: t must lie in [0,1), got " + std::to_string(t));
  }
  return schedule_count(t, positions);
}

std::vector<uint8_t> sample_training_mask(int64_t h, int64_t w, double t,
                                          Rng& rng) {
  const int64_t p = h * w;
  const int64_t n = masked_count_for(t, p);
  std::vector<int64_t> order(static_cast<size_t>(p));
  for (int64_t i = 0; i < p; ++i) order[static_cast<size_t>(i)] = i;
  // Partial Fisher-Yates: the first n entries are a uniform subset.
  for (int64_t i = 0; i < n; ++i) {
    const int64_t j =
        i + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(p - i)));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  std::vector<uint8_t> mask(static_cast<size_t>(p), 0);
  for (int64_t i = 0; i < n; ++i) {
    mask[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
  }
  return mask;
}

nn::Tensor masked_cross_entropy(const nn::Tensor& logits,
                                const TokenGrid& grid) {
  if (logits.rank() != 2 || logits.dim(0) != grid.positions()) {
    nn::fail("masked_cross_entropy: logits " + nn::shape_str(logits.shape()) +
             " do not cover " + std::to_string(grid.positions()) +
             " grid positions");
  }
  if (grid.masked_count() == 0) {
    nn::fail("masked_cross_entropy: grid has no masked positions");
  }
  std::vector<int64_t> targets(grid.indices.begin(), grid.indices.end());
  std::vector<float> weights(grid.mask.size());
  for (size_t i = 0; i < grid.mask.size(); ++i) {
    weights[i] = grid.mask[i] ? 1.f : 0.f;
  }
  return nn::cross_entropy_rows(logits, targets, &weights);
}

nn::Tensor top_k_filter(const nn::Tensor& logits, int64_t k) {
  const int64_t v = logits.dim(logits.rank() - 1);
  if (k < 1 || k > v) {
    nn::fail("top_k_filter: k " + std::to_string(k) +
             " outside [1, " + std::to_string(v) + "]");
  }
  nn::NoGrad guard;
  Tensor out = logits.clone();
  const int64_t rows = logits.numel() / v;
  std::vector<int64_t> idx(static_cast<size_t>(v));
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < v; ++j) idx[static_cast<size_t>(j)] = j;
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
      return out.at(r * v + a) > out.at(r * v + b);
    });
    for (int64_t j = k; j < v; ++j) {
      out.set(r * v + idx[static_cast<size_t>(j)],
              -std::numeric_limits<double>::infinity());
    }
  }
  return out;
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::maskgit_confidence: return "maskgit_confidence";
    case Regime::draft_and_revise: return "draft_and_revise";
    case Regime::independent: return "independent";
    case Regime::autoregressive: return "autoregressive";
  }
  return "?";
}

Regime regime_from_name(const std::string& name) {
  if (name == "maskgit_confidence") return Regime::maskgit_confidence;
  if (name == "draft_and_revise") return Regime::draft_and_revise;
  if (name == "independent") return Regime::independent;
  if (name == "autoregressive") return Regime::autoregressive;
  nn::fail("unknown sampler regime: " + name);
}

int64_t expected_forward_calls(const SamplerConfig& cfg, int64_t positions) {
  switch (cfg.regime) {
    case Regime::autoregressive: return positions;
    case Regime::independent: return 1;
    case Regime::draft_and_revise:
      return (positions + cfg.chunk_size - 1) / cfg.chunk_size +
             cfg.revise_rounds;
    case Regime::maskgit_confidence: return cfg.confidence_steps;
  }
  return 0;
}

namespace {

struct Sampled {
  int32_t token = 0;
  double confidence = 0.0;  // plain softmax probability of the token
};

// One row of logits -> sampled token. top_k restricts the candidate set,
// temperature shapes the sampling distribution; confidence is always the
// unfiltered temperature-1 probability so ranking rules stay comparable
// across regimes.
Sampled sample_row(const Tensor& logits, int64_t row, int64_t vocab,
                   const SamplerConfig& cfg, Rng& rng) {
  std::vector<double> l(static_cast<size_t>(vocab));
  for (int64_t j = 0; j < vocab; ++j) l[static_cast<size_t>(j)] =
      logits.at(row * vocab + j);

  std::vector<double> plain(l);
  double mx = plain[0];
  for (double x : plain) mx = std::max(mx, x);
  double z = 0;
  for (auto& x : plain) {
    x = std::exp(x - mx);
    z += x;
  }
  for (auto& x : plain) x /= z;

  // filter, then temperature, then sample
  std::vector<double> filtered(l);
  if (cfg.top_k > 0 && cfg.top_k < vocab) {
    std::vector<int64_t> idx(static_cast<size_t>(vocab));
    for (int64_t j = 0; j < vocab; ++j) idx[static_cast<size_t>(j)] = j;
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
      return filtered[static_cast<size_t>(a)] > filtered[static_cast<size_t>(b)];
    });
    for (int64_t j = cfg.top_k; j < vocab; ++j) {
      filtered[static_cast<size_t>(idx[static_cast<size_t>(j)])] =
          -std::numeric_limits<double>::infinity();
    }
  }

  Sampled out;
  if (cfg.temperature <= 0.0) {
    int64_t best = 0;
    for (int64_t j = 1; j < vocab; ++j) {
      if (filtered[static_cast<size_t>(j)] > filtered[static_cast<size_t>(best)]) {
        best = j;
      }
    }
    out.token = static_cast<int32_t>(best);
  } else {
    double fmx = -std::numeric_limits<double>::infinity();
    for (double x : filtered) fmx = std::max(fmx, x);
    std::vector<double> p(static_cast<size_t>(vocab), 0.0);
    double pz = 0;
    for (int64_t j = 0; j < vocab; ++j) {
      const double fx = filtered[static_cast<size_t>(j)];
      if (std::isinf(fx)) continue;
      p[static_cast<size_t>(j)] = std::exp((fx - fmx) / cfg.temperature);
      pz += p[static_cast<size_t>(j)];
    }
    const double u = rng.next_double() * pz;
    double cum = 0;
    int64_t chosen = vocab - 1;
    for (int64_t j = 0; j < vocab; ++j) {
      cum += p[static_cast<size_t>(j)];
      if (u < cum) {
        chosen = j;
        break;
      }
    }
    out.token = static_cast<int32_t>(chosen);
  }
  out.confidence = plain[static_cast<size_t>(out.token)];
  return out;
}

double held_confidence(const Tensor& logits, int64_t row, int64_t vocab,
                       int32_t held) {
  double mx = logits.at(row * vocab);
  for (int64_t j = 1; j < vocab; ++j) {
    mx = std::max(mx, logits.at(row * vocab + j));
  }
  double z = 0;
  for (int64_t j = 0; j < vocab; ++j) {
    z += std::exp(logits.at(row * vocab + j) - mx);
  }
  return std::exp(logits.at(row * vocab + held) - mx) / z;
}

Tensor run_model(const TokenPredictor& model, const TokenGrid& grid,
                 int64_t vocab, DecodeStats* stats) {
  nn::NoGrad guard;
  Tensor logits = model(grid);
  if (logits.rank() != 2 || logits.dim(0) != grid.positions() ||
      logits.dim(1) != vocab) {
    nn::fail("token predictor returned logits " +
             nn::shape_str(logits.shape()) + ", expected [" +
             std::to_string(grid.positions()) + "," + std::to_string(vocab) +
             "]");
  }
  if (stats) ++stats->forward_calls;
  return logits;
}

void check_positive(int64_t v, const char* what) {
  if (v < 1) nn::fail(std::string(what) + " must be >= 1");
}

}  // namespace

TokenGrid decode_confidence(const TokenPredictor& model, int64_t h, int64_t w,
                            int64_t vocab, const SamplerConfig& cfg, Rng& rng,
                            DecodeStats* stats) {
  check_positive(cfg.confidence_steps, "confidence steps");
  TokenGrid grid(h, w);
  grid.mask_all();
  const int64_t p = grid.positions();
  const int steps = cfg.confidence_steps;
  for (int s = 1; s <= steps; ++s) {
    Tensor logits = run_model(model, grid, vocab, stats);
    std::vector<std::pair<int64_t, Sampled>> drawn;
    for (int64_t pos = 0; pos < p; ++pos) {
      if (!grid.mask[static_cast<size_t>(pos)]) continue;
      drawn.emplace_back(pos, sample_row(logits, pos, vocab, cfg, rng));
    }
    const int64_t masked_before = static_cast<int64_t>(drawn.size());
    int64_t keep_masked =
        s == steps ? 0
                   : std::min(schedule_count(static_cast<double>(s) / steps, p),
                              masked_before - 1);
    keep_masked = std::max<int64_t>(keep_masked, 0);
    const int64_t commit = masked_before - keep_masked;
    std::stable_sort(drawn.begin(), drawn.end(),
                     [](const auto& a, const auto& b) {
                       if (a.second.confidence != b.second.confidence) {
                         return a.second.confidence > b.second.confidence;
                       }
                       return a.first < b.first;
                     });
    for (int64_t i = 0; i < commit; ++i) {
      const auto& [pos, s2] = drawn[static_cast<size_t>(i)];
      grid.indices[static_cast<size_t>(pos)] = s2.token;
      grid.mask[static_cast<size_t>(pos)] = 0;
    }
  }
  return grid;
}

TokenGrid decode_independent(const TokenPredictor& model, int64_t h, int64_t w,
                             int64_t vocab, const SamplerConfig& cfg, Rng& rng,
                             DecodeStats* stats) {
  TokenGrid grid(h, w);
  grid.mask_all();
  Tensor logits = run_model(model, grid, vocab, stats);
  for (int64_t pos = 0; pos < grid.positions(); ++pos) {
    grid.indices[static_cast<size_t>(pos)] =
        sample_row(logits, pos, vocab, cfg, rng).token;
    grid.mask[static_cast<size_t>(pos)] = 0;
  }
  return grid;
}

TokenGrid decode_autoregressive(const TokenPredictor& model, int64_t h,
                                int64_t w, int64_t vocab,
                                const SamplerConfig& cfg, Rng& rng,
                                DecodeStats* stats) {
  TokenGrid grid(h, w);
  grid.mask_all();
  for (int64_t pos = 0; pos < grid.positions(); ++pos) {
    Tensor logits = run_model(model, grid, vocab, stats);
    grid.indices[static_cast<size_t>(pos)] =
        sample_row(logits, pos, vocab, cfg, rng).token;
    grid.mask[static_cast<size_t>(pos)] = 0;
  }
  return grid;
}

TokenGrid decode_draft_and_revise(const TokenPredictor& model, int64_t h,
                                  int64_t w, int64_t vocab,
                                  const SamplerConfig& cfg, Rng& rng,
                                  DecodeStats* stats) {
  check_positive(cfg.chunk_size, "chunk_size");
  if (cfg.revise_rounds < 0) nn::fail("revise_rounds must be >= 0");
  TokenGrid grid(h, w);
  grid.mask_all();
  const int64_t p = grid.positions();

  // Draft: random permutation split into chunks, each chunk sampled jointly
  // from one forward pass.
  std::vector<int64_t> perm(static_cast<size_t>(p));
  for (int64_t i = 0; i < p; ++i) perm[static_cast<size_t>(i)] = i;
  for (int64_t i = p - 1; i > 0; --i) {
    const int64_t j =
        static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i + 1)));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  Tensor last_logits;
  for (int64_t start = 0; start < p; start += cfg.chunk_size) {
    const int64_t end = std::min<int64_t>(start + cfg.chunk_size, p);
    last_logits = run_model(model, grid, vocab, stats);
    for (int64_t i = start; i < end; ++i) {
      const int64_t pos = perm[static_cast<size_t>(i)];
      grid.indices[static_cast<size_t>(pos)] =
          sample_row(last_logits, pos, vocab, cfg, rng).token;
      grid.mask[static_cast<size_t>(pos)] = 0;
    }
  }

  // Revise: re-mask the half with the lowest held-token confidence under
  // the most recent forward pass, then resample that half jointly.
  for (int r = 0; r < cfg.revise_rounds; ++r) {
    std::vector<std::pair<double, int64_t>> conf;
    conf.reserve(static_cast<size_t>(p));
    for (int64_t pos = 0; pos < p; ++pos) {
      conf.emplace_back(held_confidence(last_logits, pos, vocab,
                                        grid.indices[static_cast<size_t>(pos)]),
                        pos);
    }
    std::stable_sort(conf.begin(), conf.end());
    const int64_t remask = p / 2;
    for (int64_t i = 0; i < remask; ++i) {
      grid.mask[static_cast<size_t>(conf[static_cast<size_t>(i)].second)] = 1;
    }
    last_logits = run_model(model, grid, vocab, stats);
    for (int64_t pos = 0; pos < p; ++pos) {
      if (!grid.mask[static_cast<size_t>(pos)]) continue;
      grid.indices[static_cast<size_t>(pos)] =
          sample_row(last_logits, pos, vocab, cfg, rng).token;
      grid.mask[static_cast<size_t>(pos)] = 0;
    }
  }
  return grid;
}

TokenGrid decode(const TokenPredictor& model, int64_t h, int64_t w,
                 int64_t vocab, const SamplerConfig& cfg, Rng& rng,
                 DecodeStats* stats) {
  switch (cfg.regime) {
    case Regime::maskgit_confidence:
      return decode_confidence(model, h, w, vocab, cfg, rng, stats);
    case Regime::draft_and_revise:
      return decode_draft_and_revise(model, h, w, vocab, cfg, rng, stats);
    case Regime::independent:
      return decode_independent(model, h, w, vocab, cfg, rng, stats);
    case Regime::autoregressive:
      return decode_autoregressive(model, h, w, vocab, cfg, rng, stats);
  }
  nn::fail("decode: unknown regime");
}

}  // namespace teco::mg
