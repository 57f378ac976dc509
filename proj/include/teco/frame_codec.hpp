#pragma once

// Per-frame discrete autoencoder: strided-conv encoder, vector quantization
// against its own codebook, transposed-conv decoder, MSE reconstruction
// plus the VQ objective, and an optional patch discriminator with the
// adaptive adversarial weight.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "teco/nn_modules.hpp"
#include "teco/token_grid.hpp"
#include "teco/vq.hpp"

namespace teco::codec {

struct CodecConfig {
  int resolution = 32;
  int downsample_layers = 2;  // latent extent = resolution / 2^layers
  int64_t codebook_size = 64;
  int64_t embed_dim = 32;
  int base_width = 32;
  bool adversarial_enabled = false;
  double vq_beta = 0.25;

  int latent_extent() const { return resolution >> downsample_layers; }
  void validate() const;
};

class FrameCodec {
 public:
  FrameCodec(const CodecConfig& cfg, Rng& rng);

  const CodecConfig& config() const { return cfg_; }

  // frames: [N,3,R,R] float in [0,1]. Deterministic, gradient-free.
  std::vector<TokenGrid> encode(const nn::Tensor& frames);

  // [N,3,R,R] in [0,1] (sigmoid output).
  nn::Tensor decode_tokens(const std::vector<TokenGrid>& grids);

  struct TrainOut {
    nn::Tensor recon;        // [N,3,R,R]
    nn::Tensor recon_loss;   // scalar MSE
    nn::Tensor vq;           // scalar, codebook + beta*commitment
    nn::Tensor total;        // recon_loss + vq
  };
  // Differentiable training pass; updates codebook usage counts.
  TrainOut forward_train(const nn::Tensor& frames);

  vq::Codebook& codebook() { return book_; }
  const std::vector<std::pair<std::string, nn::Tensor>>& named_params() const {
    return reg_.named();
  }
  std::vector<nn::Tensor> param_tensors() const { return reg_.tensors(); }

  // Weight tensor of the last decoder layer (the adaptive-weight probe
  // point).
  nn::Tensor last_decoder_weight() const { return dec_out_.w; }

 private:
  nn::Tensor encode_features(const nn::Tensor& frames);  // [N*P, D] rows
  nn::Tensor decode_features(const nn::Tensor& z_rows, int64_t n);

  CodecConfig cfg_;
  nn::ParamRegistry reg_;
  vq::Codebook book_;
  nn::Conv2d enc1_, enc2_, enc3_, enc_out_;
  nn::Conv2d dec_in_, dec_mid_;
  nn::ConvTranspose2d up1_, up2_;
  nn::Conv2d dec_out_;
};

// Patch-level real/fake classifier; outputs per-patch score logits.
class PatchDiscriminator {
 public:
  PatchDiscriminator(int in_channels, int base_width, Rng& rng);
  nn::Tensor operator()(const nn::Tensor& frames) const;  // [N,1,h',w']
  const std::vector<std::pair<std::string, nn::Tensor>>& named_params() const {
    return reg_.named();
  }
  std::vector<nn::Tensor> param_tensors() const { return reg_.tensors(); }

 private:
  nn::ParamRegistry reg_;
  nn::Conv2d c1_, c2_, c3_;
};

// d_term = mean log D(x) + mean log(1 - D(x_hat))  (maximized by D);
// g_term = mean log D(x_hat)                        (non-saturating G side).
// Inputs are patch score logits; probabilities go through stable
// log-sigmoid forms, finite for any logit magnitude.
std::pair<nn::Tensor, nn::Tensor> gan_loss(const nn::Tensor& d_real_logits,
                                           const nn::Tensor& d_fake_logits);

// lambda = rec_grad_norm / (gan_grad_norm + 1e-6)
double adaptive_weight(double rec_grad_norm, double gan_grad_norm);

// L2 norm of d(loss)/d(param); loss_fn must rebuild its graph per call.
double grad_norm_wrt(const std::function<nn::Tensor()>& loss_fn,
                     const nn::Tensor& param);

}  // namespace teco::codec
