#pragma once

// Masked-token modeling: the cosine mask schedule, training-mask sampling,
// masked cross-entropy, and the sampling regimes compared in the ablations
// (confidence-based, draft-and-revise, independent, autoregressive).
//
// Decoding is model-agnostic: a TokenPredictor maps the current grid
// (indices + hidden mask) to logits [positions, vocab]. Forward invocations
// are counted per decode session.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "teco/rng.hpp"
#include "teco/tensor.hpp"
#include "teco/token_grid.hpp"

namespace teco::mg {

// gamma(t) = cos(pi t / 2) for t in [0, 1).
double gamma(double t);

// ceil(gamma(t) * positions)
int64_t masked_count_for(double t, int64_t positions);

// Exactly masked_count_for(t, h*w) positions hidden, uniform without
// replacement.
std::vector<uint8_t> sample_training_mask(int64_t h, int64_t w, double t,
                                          Rng& rng);

// Mean cross-entropy over masked positions only; logits [P, V] in raster
// order. Rows at unmasked positions get exactly zero gradient.
nn::Tensor masked_cross_entropy(const nn::Tensor& logits,
                                const TokenGrid& grid);

// All but the k largest logits (per row) set to -inf. logits: [V] or [P,V].
nn::Tensor top_k_filter(const nn::Tensor& logits, int64_t k);

enum class Regime {
  maskgit_confidence,
  draft_and_revise,
  independent,
  autoregressive,
};

const char* regime_name(Regime r);
Regime regime_from_name(const std::string& name);

struct SamplerConfig {
  Regime regime = Regime::draft_and_revise;
  int chunk_size = 8;
  int revise_rounds = 2;
  int confidence_steps = 8;  // steps for the maskgit_confidence regime
  double temperature = 1.0;  // 0 = argmax
  int64_t top_k = 0;         // 0 = disabled
};

using TokenPredictor = std::function<nn::Tensor(const TokenGrid&)>;

struct DecodeStats {
  int64_t forward_calls = 0;
};

// Expected model invocations for a full decode of `positions` tokens.
int64_t expected_forward_calls(const SamplerConfig& cfg, int64_t positions);

TokenGrid decode_confidence(const TokenPredictor& model, int64_t h, int64_t w,
                            int64_t vocab, const SamplerConfig& cfg, Rng& rng,
                            DecodeStats* stats = nullptr);
TokenGrid decode_draft_and_revise(const TokenPredictor& model, int64_t h,
                                  int64_t w, int64_t vocab,
                                  const SamplerConfig& cfg, Rng& rng,
                                  DecodeStats* stats = nullptr);
TokenGrid decode_independent(const TokenPredictor& model, int64_t h, int64_t w,
                             int64_t vocab, const SamplerConfig& cfg, Rng& rng,
                             DecodeStats* stats = nullptr);
TokenGrid decode_autoregressive(const TokenPredictor& model, int64_t h,
                                int64_t w, int64_t vocab,
                                const SamplerConfig& cfg, Rng& rng,
                                DecodeStats* stats = nullptr);

// Dispatch on cfg.regime.
TokenGrid decode(const TokenPredictor& model, int64_t h, int64_t w,
                 int64_t vocab, const SamplerConfig& cfg, Rng& rng,
                 DecodeStats* stats = nullptr);

}  // namespace teco::mg
