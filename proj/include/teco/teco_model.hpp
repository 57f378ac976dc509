#pragma once

// The TECO architecture and objective: conditional frame encoder with
// per-timestep vector quantization (the first step stays continuous), a
// strided-conv downsampled causal temporal transformer over per-step
// tokens, a channel-concat decoder, a MaskGit dynamics prior conditioned on
// h_t, DropLoss timestep subsampling, and autoregressive-in-time rollout.
//
// Reconstruction targets are either discretized pixel bins (default) or the
// token grid of a trained frame codec.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "teco/frame_codec.hpp"
#include "teco/maskgit.hpp"
#include "teco/nn_modules.hpp"
#include "teco/token_grid.hpp"
#include "teco/vq.hpp"

namespace teco::model {

struct TecoConfig {
  // data
  int resolution = 32;
  int64_t sequence_length = 40;
  int action_vocab = 4;  // reset/left/right/forward; null id = action_vocab

  // conditional encoder + dynamics codebook
  int enc_downsample = 2;  // latent extent = resolution >> enc_downsample
  int enc_width = 32;      // second stage doubles this
  int64_t codebook_size = 64;
  int64_t embed_dim = 32;

  // temporal transformer
  int temporal_downsample = 2;  // strided conv factor on the latent grid
  int temporal_conv_channels = 96;
  int temporal_width = 192;
  int temporal_layers = 4;
  int temporal_heads = 4;
  int temporal_ff = 768;
  int h_channels = 48;     // channels of h_t after the transposed conv
  int context_window = 0;  // 0 = full causal context; >0 = windowed

  // decoder
  int dec_width = 48;

  // reconstruction target
  bool pixel_mode = true;
  int pixel_bins = 16;

  // MaskGit prior
  int prior_width = 96;
  int prior_layers = 3;
  int prior_heads = 4;
  int prior_ff = 384;

  double droploss_keep_rate = 0.1;
  double vq_beta = 0.25;

  int latent_extent() const { return resolution >> enc_downsample; }
  int64_t latent_positions() const {
    return static_cast<int64_t>(latent_extent()) * latent_extent();
  }
  void validate() const;
};

// Pixel-bin discretization used by the pixel-mode reconstruction path.
inline int pixel_bin(uint8_t byte, int bins) {
  return static_cast<int>(byte) * bins / 256;
}
inline uint8_t pixel_bin_center(int bin, int bins) {
  return static_cast<uint8_t>(((2 * bin + 1) * 256) / (2 * bins));
}

struct SeqBatch {
  int64_t s = 0, t = 0, h = 0, w = 0;
  std::vector<uint8_t> frames;       // s*t*h*w*3
  std::vector<uint8_t> actions;      // s*t
  std::vector<uint8_t> action_mask;  // s*t, 1 = hidden (use the null action)
};

// Uniform subset of {1, .., T-1} (0-based timesteps; the first frame is
// never decoded), size max(1, round(keep_rate * (T-1))), ascending.
std::vector<int64_t> droploss_select(int64_t t, double keep_rate, Rng& rng);

struct LossBreakdown {
  nn::Tensor l_vq;
  nn::Tensor l_recon;
  nn::Tensor l_prior;
  nn::Tensor l_total;
  std::vector<int64_t> kept_timesteps;
  double recon_accuracy = 0;  // argmax over reconstruction targets, kept steps
  double prior_accuracy = 0;  // argmax at masked positions, kept steps
};

struct StepEncoding {
  nn::Tensor z_rows;  // [P, D]; quantized rows unless is_first
  TokenGrid grid;     // empty (h=w=0) when unquantized
  bool quantized = false;
};

struct RolloutResult {
  std::vector<uint8_t> frames;  // (context+horizon) * h*w*3
  std::vector<TokenGrid> tokens;  // one per predicted step
  int64_t prior_forward_calls = 0;
  double prior_decode_seconds = 0;
};

class TecoModel {
 public:
  TecoModel(const TecoConfig& cfg, Rng& rng);

  const TecoConfig& config() const { return cfg_; }

  // Attach a trained frame codec (required when !pixel_mode).
  void set_codec(std::shared_ptr<codec::FrameCodec> codec);
  codec::FrameCodec* codec() { return codec_.get(); }

  // --- spec operation surface -------------------------------------------
  // x_t, x_prev: [3,R,R] floats in [0,1]; when is_first, x_prev is ignored
  // and the output stays continuous (L2-normalized, unquantized).
  StepEncoding encode_step(const nn::Tensor& x_t, const nn::Tensor& x_prev,
                           bool is_first, bool update_usage = false);

  // z_rows_all: [S*T*P, D] latent rows; actions/mask: [S*T].
  // Returns h for every step: [S*T, Ch, lh, lw]; h_t depends only on
  // steps < t and the action entering t.
  nn::Tensor temporal_context(const nn::Tensor& z_rows_all, int64_t s,
                              int64_t t, const std::vector<uint8_t>& actions,
                              const std::vector<uint8_t>& action_mask);

  // z: [N, D, lh, lw], h: [N, Ch, lh, lw] -> logits rows over the
  // reconstruction vocabulary ([N*R*R*3, bins] in pixel mode,
  // [N*P, K_f] in codec mode).
  nn::Tensor decode_step(const nn::Tensor& z, const nn::Tensor& h);

  // Masked grids + h -> logits [N*P, K] over the dynamics codebook.
  nn::Tensor prior_step(const std::vector<TokenGrid>& masked,
                        const nn::Tensor& h);

  LossBreakdown teco_loss(const SeqBatch& batch, Rng& rng);
  LossBreakdown teco_loss(const SeqBatch& batch, Rng& rng, double keep_rate);

  // Teacher-forced argmax accuracies on all timesteps >= 1, prior masks
  // drawn at fixed schedule position t (default gamma(0.5) ~ 70% hidden).
  struct Accuracy {
    double recon = 0;
    double prior = 0;
  };
  Accuracy evaluate_accuracy(const SeqBatch& batch, Rng& rng,
                             double mask_t = 0.5);

  // Batch-averaged (recon + prior) loss per timestep 1..T-1 with prior
  // masks drawn once from rng; the teacher-forced quantities DropLoss
  // subsamples. Gradient-free.
  std::vector<double> per_step_losses(const SeqBatch& batch, Rng& rng);

  // Context frames are bytes; actions/mask cover context+horizon. The
  // predicted frame at each step feeds the next encoder input.
  RolloutResult rollout(const uint8_t* context_frames, int64_t context_len,
                        const std::vector<uint8_t>& actions,
                        const std::vector<uint8_t>& action_mask,
                        int64_t horizon, const mg::SamplerConfig& sampler,
                        Rng& rng);

  // ------------------------------------------------------------------------
  vq::Codebook& codebook() { return book_; }
  const std::vector<std::pair<std::string, nn::Tensor>>& named_params() const {
    return reg_.named();
  }
  std::vector<nn::Tensor> param_tensors() const { return reg_.tensors(); }

  // Reconstruction vocabulary (pixel bins or codec codebook size).
  int64_t recon_vocab() const;

  // Converts stored bytes to the model's input float (pixel mode snaps to
  // bin centers so rollout feedback matches training inputs).
  float input_float(uint8_t byte) const;

 private:
  struct EncodeOut {
    nn::Tensor z_rows_all;           // [S*T*P, D]
    std::vector<int32_t> tokens;     // [S*(T-1)*P], timesteps >= 1
    nn::Tensor l_vq;
  };
  nn::Tensor encoder_features(const nn::Tensor& x_in);  // [N*P, D] rows
  EncodeOut encode_sequences(const SeqBatch& batch, bool update_usage);
  nn::Tensor frames_to_input(const SeqBatch& batch) const;  // [S*T,6,R,R]
  std::vector<int64_t> recon_targets(const SeqBatch& batch,
                                     const std::vector<int64_t>& kept_flat);

  TecoConfig cfg_;
  nn::ParamRegistry reg_;
  vq::Codebook book_;
  std::shared_ptr<codec::FrameCodec> codec_;

  // encoder
  nn::Conv2d enc1_, enc2_, enc3_, enc_out_;
  // temporal stack
  nn::Conv2d temporal_down_;
  nn::Linear temporal_in_, temporal_out_;
  nn::Tensor start_emb_, temporal_pos_, action_emb_;
  std::vector<nn::TransformerBlock> temporal_blocks_;
  nn::LayerNorm temporal_ln_;
  nn::ConvTranspose2d temporal_up_;
  // decoder
  nn::Conv2d dec_in_;
  std::vector<nn::ConvTranspose2d> dec_ups_;
  nn::Conv2d dec_out_;
  // prior
  nn::Tensor prior_token_emb_, prior_pos_;
  nn::Linear prior_in_, prior_head_;
  std::vector<nn::TransformerBlock> prior_blocks_;
  nn::LayerNorm prior_ln_;
  uint64_t init_key_ = 0;
};

}  // namespace teco::model
