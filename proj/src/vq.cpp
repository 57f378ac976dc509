#include "teco/vq.hpp"

#include <cmath>

#include "teco/detail/kernels_ref.hpp"
#include "teco/kernels.hpp"
#include "teco/tape.hpp"

namespace teco::vq {

using nn::DType;
using nn::Tensor;

Codebook::Codebook(int64_t k, int64_t d, Rng& rng, nn::DType dtype) {
  embeddings = Tensor::randn({k, d}, rng, 1.0, dtype);
  usage.assign(static_cast<size_t>(k), 0);
  normalize_embeddings();
}

uint64_t Codebook::total_hits() const {
  uint64_t n = 0;
  for (uint64_t u : usage) n += u;
  return n;
}

void Codebook::normalize_embeddings() {
  nn::NoGrad guard;
  const int64_t k = code_count();
  const int64_t d = width();
  for (int64_t r = 0; r < k; ++r) {
    double ss = 0;
    for (int64_t j = 0; j < d; ++j) {
      const double v = embeddings.at(r * d + j);
      ss += v * v;
    }
    const double inv = 1.0 / std::sqrt(ss + 1e-12);
    for (int64_t j = 0; j < d; ++j) {
      embeddings.set(r * d + j, embeddings.at(r * d + j) * inv);
    }
  }
}

Tensor straight_through(const Tensor& h, const Tensor& quantized) {
  if (h.shape() != quantized.shape()) {
    nn::fail("straight_through: shape mismatch " + nn::shape_str(h.shape()) +
             " vs " + nn::shape_str(quantized.shape()));
  }
  return nn::add(h, nn::stop_gradient(nn::sub(quantized, h)));
}

RowQuantization quantize_rows(const Tensor& h_rows, Codebook& book,
                              bool update_usage) {
  if (h_rows.rank() != 2) {
    nn::fail("quantize_rows: expects [R, D], got " +
             nn::shape_str(h_rows.shape()));
  }
  if (h_rows.dim(1) != book.width()) {
    nn::fail("quantize: input width " + std::to_string(h_rows.dim(1)) +
             " does not match codebook width " + std::to_string(book.width()));
  }
  if (h_rows.dtype() != book.embeddings.dtype()) {
    nn::fail("quantize: dtype mismatch with codebook");
  }
  const int64_t rows = h_rows.dim(0);
  const int64_t k = book.code_count();
  const int64_t d = book.width();

  Tensor h_n = nn::l2_normalize_rows(h_rows);
  Tensor e_n = nn::l2_normalize_rows(book.embeddings);

  // Nearest neighbour on normalized vectors: argmin ||h-e||^2 = argmax h.e;
  // scan ascending with strict greater-than so ties take the lowest index.
  RowQuantization out;
  out.indices.resize(static_cast<size_t>(rows));
  {
    nn::NoGrad guard;
    Tensor scores = Tensor::zeros({rows, k}, h_rows.dtype());
    if (h_rows.dtype() == DType::F32) {
      kern::active().gemm_nt(h_n.f32(), e_n.f32(), scores.f32(),
                             static_cast<int>(rows), static_cast<int>(d),
                             static_cast<int>(k), false);
    } else {
      kern::ref::gemm_nt(h_n.f64(), e_n.f64(), scores.f64(),
                         static_cast<int>(rows), static_cast<int>(d),
                         static_cast<int>(k), false);
    }
    for (int64_t r = 0; r < rows; ++r) {
      int32_t best = 0;
      double best_score = scores.at(r * k);
      for (int64_t j = 1; j < k; ++j) {
        const double s = scores.at(r * k + j);
        if (s > best_score) {
          best_score = s;
          best = static_cast<int32_t>(j);
        }
      }
      out.indices[static_cast<size_t>(r)] = best;
    }
  }
  if (update_usage) {
    for (int32_t idx : out.indices) {
      ++book.usage[static_cast<size_t>(idx)];
    }
  }

  std::vector<int64_t> idx64(out.indices.begin(), out.indices.end());
  Tensor e_sel = nn::gather_rows(e_n, idx64);

  const double inv_rows = 1.0 / static_cast<double>(rows);
  Tensor diff_cb = nn::sub(nn::stop_gradient(h_n), e_sel);
  out.codebook_loss =
      nn::mul_scalar(nn::sum_all(nn::mul(diff_cb, diff_cb)), inv_rows);
  Tensor diff_cm = nn::sub(h_n, nn::stop_gradient(e_sel));
  out.commitment_loss =
      nn::mul_scalar(nn::sum_all(nn::mul(diff_cm, diff_cm)), inv_rows);
  out.quantized = straight_through(h_n, e_sel);
  return out;
}

QuantizationResult quantize(const Tensor& h, Codebook& book,
                            bool update_usage) {
  if (h.rank() != 3) {
    nn::fail("quantize: expects [H', W', D], got " + nn::shape_str(h.shape()));
  }
  const int64_t gh = h.dim(0);
  const int64_t gw = h.dim(1);
  Tensor rows = nn::reshape(h, {gh * gw, h.dim(2)});
  RowQuantization rq = quantize_rows(rows, book, update_usage);

  QuantizationResult res;
  res.indices = TokenGrid(gh, gw);
  res.indices.indices = rq.indices;
  res.quantized = nn::reshape(rq.quantized, h.shape());
  res.codebook_loss = rq.codebook_loss;
  res.commitment_loss = rq.commitment_loss;
  return res;
}

Tensor vq_loss(const QuantizationResult& result, double beta) {
  return nn::add(result.codebook_loss,
                 nn::mul_scalar(result.commitment_loss, beta));
}

Tensor vq_loss(const RowQuantization& result, double beta) {
  return nn::add(result.codebook_loss,
                 nn::mul_scalar(result.commitment_loss, beta));
}

double usage_perplexity(const std::vector<uint64_t>& counts) {
  uint64_t total = 0;
  for (uint64_t c : counts) total += c;
  if (total == 0) nn::fail("codebook_perplexity: no recorded hits");
  double entropy = 0;
  for (uint64_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double codebook_perplexity(const Codebook& book) {
  return usage_perplexity(book.usage);
}

}  // namespace teco::vq
