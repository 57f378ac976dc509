#pragma once

// Codebook management and vector quantization with straight-through
// gradients. Lookups run on L2-normalized vectors (both the input rows and
// the codebook), so nearest-by-distance coincides with highest cosine
// similarity; the commitment/codebook losses are evaluated on the same
// normalized vectors.

#include <cstdint>
#include <vector>

#include "teco/ops.hpp"
#include "teco/rng.hpp"
#include "teco/tensor.hpp"
#include "teco/token_grid.hpp"

namespace teco::vq {

struct Codebook {
  nn::Tensor embeddings;        // [K, D] raw parameters
  std::vector<uint64_t> usage;  // per-code quantization hits

  Codebook() = default;
  // Unit-normalized isotropic Gaussian init.
  Codebook(int64_t k, int64_t d, Rng& rng,
           nn::DType dtype = nn::DType::F32);

  int64_t code_count() const { return embeddings.dim(0); }
  int64_t width() const { return embeddings.dim(1); }
  uint64_t total_hits() const;

  // Rescale raw embeddings to unit L2 norm in place (no gradient).
  void normalize_embeddings();
};

// Forward value = quantized, gradient w.r.t. h = identity pass-through.
nn::Tensor straight_through(const nn::Tensor& h, const nn::Tensor& quantized);

// Batched core: h_rows [R, D]. quantized rows are rows of the normalized
// codebook; losses are means over rows of squared distances (summed over D).
struct RowQuantization {
  std::vector<int32_t> indices;
  nn::Tensor quantized;        // [R, D], straight-through
  nn::Tensor codebook_loss;    // scalar, ||sg(h) - e||^2 term
  nn::Tensor commitment_loss;  // scalar, ||h - sg(e)||^2 term
};
RowQuantization quantize_rows(const nn::Tensor& h_rows, Codebook& book,
                              bool update_usage = true);

struct QuantizationResult {
  TokenGrid indices;
  nn::Tensor quantized;  // same shape as the input
  nn::Tensor codebook_loss;
  nn::Tensor commitment_loss;
};

// h: [H', W', D]. Ties break to the lowest code index.
QuantizationResult quantize(const nn::Tensor& h, Codebook& book,
                            bool update_usage = true);

// codebook_loss + beta * commitment_loss (beta = 0.25).
nn::Tensor vq_loss(const QuantizationResult& result, double beta = 0.25);
nn::Tensor vq_loss(const RowQuantization& result, double beta = 0.25);

// exp(entropy) of the empirical usage distribution, in [1, K].
double codebook_perplexity(const Codebook& book);
// Same, over an explicit count vector (e.g. a per-interval snapshot diff).
double usage_perplexity(const std::vector<uint64_t>& counts);

}  // namespace teco::vq
