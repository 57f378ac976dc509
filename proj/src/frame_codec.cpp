#include "teco/frame_codec.hpp"

#include <cmath>

#include "teco/tape.hpp"

namespace teco::codec {

using nn::Tensor;

void CodecConfig::validate() const {
  if (downsample_layers < 1) nn::fail("codec: downsample_layers must be >= 1");
  if (resolution % (1 << downsample_layers) != 0) {
    nn::fail("codec: resolution " + std::to_string(resolution) +
             " not divisible by downsampling factor " +
             std::to_string(1 << downsample_layers));
  }
  if (codebook_size < 2 || embed_dim < 1 || base_width < 1) {
    nn::fail("codec: degenerate codebook or width configuration");
  }
  if (downsample_layers != 2) {
    nn::fail("codec: this build uses a fixed 2-stage encoder (4x downsample)");
  }
}

FrameCodec::FrameCodec(const CodecConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  Rng book_rng = rng.split(0xB00C);
  book_ = vq::Codebook(cfg.codebook_size, cfg.embed_dim, book_rng);
  book_.embeddings.set_requires_grad(true);
  const int w1 = cfg.base_width;
  const int w2 = cfg.base_width * 2;
  enc1_ = nn::Conv2d(reg_, "enc1", 3, w1, 3, 2, 1, rng);
  enc2_ = nn::Conv2d(reg_, "enc2", w1, w2, 3, 2, 1, rng);
  enc3_ = nn::Conv2d(reg_, "enc3", w2, w2, 3, 1, 1, rng);
  enc_out_ = nn::Conv2d(reg_, "enc_out", w2, cfg.embed_dim, 1, 1, 0, rng);
  dec_in_ = nn::Conv2d(reg_, "dec_in", cfg.embed_dim, w2, 3, 1, 1, rng);
  dec_mid_ = nn::Conv2d(reg_, "dec_mid", w2, w2, 3, 1, 1, rng);
  up1_ = nn::ConvTranspose2d(reg_, "up1", w2, w1, 2, 2, rng);
  up2_ = nn::ConvTranspose2d(reg_, "up2", w1, w1, 2, 2, rng);
  dec_out_ = nn::Conv2d(reg_, "dec_out", w1, 3, 3, 1, 1, rng);
  // Codebook rides along in the same registry for optimization/checkpoints.
  reg_.add("codebook", book_.embeddings);
}

Tensor FrameCodec::encode_features(const Tensor& frames) {
  if (frames.rank() != 4 || frames.dim(1) != 3 ||
      frames.dim(2) != cfg_.resolution || frames.dim(3) != cfg_.resolution) {
    nn::fail("codec encode: expected [N,3," + std::to_string(cfg_.resolution) +
             "," + std::to_string(cfg_.resolution) + "], got " +
             nn::shape_str(frames.shape()));
  }
  Tensor h = nn::gelu(enc1_(frames));
  h = nn::gelu(enc2_(h));
  h = nn::gelu(enc3_(h));
  h = enc_out_(h);  // [N, D, le, le]
  const int64_t n = h.dim(0);
  const int64_t le = cfg_.latent_extent();
  Tensor rows = nn::reshape(
      nn::permute(h, {0, 2, 3, 1}), {n * le * le, cfg_.embed_dim});
  return rows;
}

Tensor FrameCodec::decode_features(const Tensor& z_rows, int64_t n) {
  const int64_t le = cfg_.latent_extent();
  Tensor grid = nn::permute(
      nn::reshape(z_rows, {n, le, le, cfg_.embed_dim}), {0, 3, 1, 2});
  Tensor h = nn::gelu(dec_in_(grid));
  h = nn::gelu(dec_mid_(h));
  h = nn::gelu(up1_(h));
  h = nn::gelu(up2_(h));
  return nn::sigmoid(dec_out_(h));
}

std::vector<TokenGrid> FrameCodec::encode(const Tensor& frames) {
  nn::NoGrad guard;
  Tensor rows = encode_features(frames);
  vq::RowQuantization q = vq::quantize_rows(rows, book_, /*update_usage=*/false);
  const int64_t n = frames.dim(0);
  const int64_t le = cfg_.latent_extent();
  std::vector<TokenGrid> grids;
  grids.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    TokenGrid g(le, le);
    std::copy(q.indices.begin() + i * le * le,
              q.indices.begin() + (i + 1) * le * le, g.indices.begin());
    grids.push_back(std::move(g));
  }
  return grids;
}

Tensor FrameCodec::decode_tokens(const std::vector<TokenGrid>& grids) {
  nn::NoGrad guard;
  const int64_t le = cfg_.latent_extent();
  std::vector<int64_t> ids;
  for (const TokenGrid& g : grids) {
    if (g.h != le || g.w != le) {
      nn::fail("codec decode: grid extents " + std::to_string(g.h) + "x" +
               std::to_string(g.w) + " do not match latent extent " +
               std::to_string(le));
    }
    for (int32_t idx : g.indices) {
      if (idx < 0 || idx >= cfg_.codebook_size) {
        nn::fail("codec decode: token id " + std::to_string(idx) +
                 " outside codebook of " + std::to_string(cfg_.codebook_size));
      }
      ids.push_back(idx);
    }
  }
  Tensor e_n = nn::l2_normalize_rows(book_.embeddings);
  Tensor z_rows = nn::gather_rows(e_n, ids);
  return decode_features(z_rows, static_cast<int64_t>(grids.size()));
}

FrameCodec::TrainOut FrameCodec::forward_train(const Tensor& frames) {
  TrainOut out;
  Tensor rows = encode_features(frames);
  vq::RowQuantization q = vq::quantize_rows(rows, book_);
  out.recon = decode_features(q.quantized, frames.dim(0));
  Tensor diff = nn::sub(out.recon, frames);
  out.recon_loss = nn::mean_all(nn::mul(diff, diff));
  out.vq = vq::vq_loss(q, cfg_.vq_beta);
  out.total = nn::add(out.recon_loss, out.vq);
  return out;
}

PatchDiscriminator::PatchDiscriminator(int in_channels, int base_width,
                                       Rng& rng) {
  c1_ = nn::Conv2d(reg_, "d1", in_channels, base_width, 3, 2, 1, rng);
  c2_ = nn::Conv2d(reg_, "d2", base_width, base_width * 2, 3, 2, 1, rng);
  c3_ = nn::Conv2d(reg_, "d3", base_width * 2, 1, 3, 1, 1, rng);
}

Tensor PatchDiscriminator::operator()(const Tensor& frames) const {
  Tensor h = nn::gelu(c1_(frames));
  h = nn::gelu(c2_(h));
  return c3_(h);
}

std::pair<Tensor, Tensor> gan_loss(const Tensor& d_real_logits,
                                   const Tensor& d_fake_logits) {
  // log D(x) = -softplus(-s), log(1 - D(x)) = -softplus(s)
  Tensor log_d_real =
      nn::mul_scalar(nn::mean_all(nn::softplus(nn::mul_scalar(d_real_logits, -1.0))), -1.0);
  Tensor log_one_minus_fake =
      nn::mul_scalar(nn::mean_all(nn::softplus(d_fake_logits)), -1.0);
  Tensor d_term = nn::add(log_d_real, log_one_minus_fake);
  Tensor g_term =
      nn::mul_scalar(nn::mean_all(nn::softplus(nn::mul_scalar(d_fake_logits, -1.0))), -1.0);
  return {d_term, g_term};
}

double adaptive_weight(double rec_grad_norm, double gan_grad_norm) {
  if (rec_grad_norm < 0 || gan_grad_norm < 0) {
    nn::fail("adaptive_weight: norms must be nonnegative");
  }
  return rec_grad_norm / (gan_grad_norm + 1e-6);
}

double grad_norm_wrt(const std::function<Tensor()>& loss_fn,
                     const Tensor& param) {
  nn::Tape tape;
  Tensor loss = loss_fn();
  tape.backward(loss);
  Tensor g = tape.grad(param);
  if (!g.defined()) return 0.0;
  double acc = 0;
  for (int64_t i = 0; i < g.numel(); ++i) acc += g.at(i) * g.at(i);
  return std::sqrt(acc);
}

}  // namespace teco::codec
