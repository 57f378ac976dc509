#include "teco/embedder.hpp"

#include <cmath>

namespace teco::metrics {

using nn::Tensor;

void EmbedderConfig::validate() const {
  if (resolution < 16 || resolution % 4 != 0) {
    nn::fail("embedder: resolution must be >= 16 and divisible by 4");
  }
  if (clip_frames < 4 || clip_frames % 4 != 0) {
    nn::fail("embedder: clip_frames must be >= 4 and divisible by 4");
  }
  if (action_vocab < 2 || feature_dim < 1) {
    nn::fail("embedder: degenerate head configuration");
  }
}

ClipEmbedder::ClipEmbedder(const EmbedderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  auto conv_init = [&](const std::string& name, int64_t in, int64_t out,
                       int kt, int k, Tensor* w, Tensor* b) {
    const double fan_in = double(in) * kt * k * k;
    *w = reg_.add(name + ".w", Tensor::randn({out, in, kt, k, k}, rng,
                                             std::sqrt(2.0 / fan_in)));
    *b = reg_.add(name + ".b", Tensor::zeros({out}));
  };
  conv_init("e1", 3, 16, 3, 3, &c1_w_, &c1_b_);
  conv_init("e2", 16, 32, 3, 3, &c2_w_, &c2_b_);
  conv_init("e3", 32, cfg.feature_dim, 3, 3, &c3_w_, &c3_b_);
  head_ = nn::Linear(reg_, "head", cfg.feature_dim, cfg.action_vocab, rng);
}

Tensor ClipEmbedder::make_clip(const VideoView& video) const {
  if (video.h != cfg_.resolution || video.w != cfg_.resolution) {
    nn::fail("make_clip: video resolution mismatch");
  }
  if (video.t < 1) nn::fail("make_clip: empty video");
  const int64_t tc = cfg_.clip_frames;
  const int64_t r = cfg_.resolution;
  Tensor clip = Tensor::zeros({3, tc, r, r});
  for (int64_t i = 0; i < tc; ++i) {
    // uniform temporal subsampling across the full video
    const int64_t src = video.t == 1 ? 0 : (i * (video.t - 1)) / (tc - 1);
    FrameView f = video.frame(src);
    for (int64_t pnt = 0; pnt < r * r; ++pnt) {
      for (int64_t c = 0; c < 3; ++c) {
        clip.f32()[(c * tc + i) * r * r + pnt] = f.data[pnt * 3 + c] / 255.f;
      }
    }
  }
  return clip;
}

Tensor ClipEmbedder::features(const Tensor& clips) {
  if (clips.rank() != 5 || clips.dim(1) != 3 ||
      clips.dim(2) != cfg_.clip_frames || clips.dim(3) != cfg_.resolution) {
    nn::fail("embedder features: expected [N,3," +
             std::to_string(cfg_.clip_frames) + "," +
             std::to_string(cfg_.resolution) + "," +
             std::to_string(cfg_.resolution) + "], got " +
             nn::shape_str(clips.shape()));
  }
  const int s1[3] = {1, 2, 2}, p1[3] = {1, 1, 1};
  const int s2[3] = {2, 2, 2}, p2[3] = {1, 1, 1};
  Tensor h = nn::gelu(nn::add_channel_bias(nn::conv3d(clips, c1_w_, s1, p1),
                                           c1_b_));
  h = nn::gelu(nn::add_channel_bias(nn::conv3d(h, c2_w_, s2, p2), c2_b_));
  h = nn::gelu(nn::add_channel_bias(nn::conv3d(h, c3_w_, s2, p2), c3_b_));
  return mean_trailing(h, 2);  // [N, F]
}

Tensor ClipEmbedder::logits(const Tensor& clips) {
  return head_(features(clips));
}

int64_t ClipEmbedder::dominant_action(const std::vector<uint8_t>& actions,
                                      int action_vocab) {
  std::vector<int64_t> counts(static_cast<size_t>(action_vocab), 0);
  for (size_t i = 1; i < actions.size(); ++i) {  // skip the reset slot
    if (actions[i] < action_vocab) ++counts[actions[i]];
  }
  int64_t best = 0;
  for (int a = 1; a < action_vocab; ++a) {
    if (counts[static_cast<size_t>(a)] > counts[static_cast<size_t>(best)]) {
      best = a;
    }
  }
  return best;
}

}  // namespace teco::metrics
