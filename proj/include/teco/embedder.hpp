#pragma once

// Embedding network behind the Frechet video-quality proxy: a small 3D-conv
// classifier trained to name the dominant action of a clip. Clips are
// uniformly subsampled in time to a fixed length before embedding.

#include <vector>

#include "teco/metrics.hpp"
#include "teco/nn_modules.hpp"

namespace teco::metrics {

struct EmbedderConfig {
  int resolution = 32;
  int clip_frames = 8;   // after uniform temporal subsampling
  int action_vocab = 4;
  int feature_dim = 32;
  void validate() const;
};

class ClipEmbedder {
 public:
  ClipEmbedder(const EmbedderConfig& cfg, Rng& rng);

  const EmbedderConfig& config() const { return cfg_; }

  // video bytes (t*h*w*3) -> [3, clip_frames, R, R] float clip
  nn::Tensor make_clip(const VideoView& video) const;

  // clips: [N, 3, Tc, R, R] -> features [N, F]
  nn::Tensor features(const nn::Tensor& clips);
  // features -> action logits [N, A]
  nn::Tensor logits(const nn::Tensor& clips);

  // Dominant non-reset action of an action sequence (ties to lowest id).
  static int64_t dominant_action(const std::vector<uint8_t>& actions,
                                 int action_vocab);

  const std::vector<std::pair<std::string, nn::Tensor>>& named_params() const {
    return reg_.named();
  }
  std::vector<nn::Tensor> param_tensors() const { return reg_.tensors(); }

 private:
  EmbedderConfig cfg_;
  nn::ParamRegistry reg_;
  nn::Tensor c1_w_, c1_b_, c2_w_, c2_b_, c3_w_, c3_b_;
  nn::Linear head_;
};

}  // namespace teco::metrics
