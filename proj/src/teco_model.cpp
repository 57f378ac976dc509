#include "teco/teco_model.hpp"

#include <chrono>
#include <cmath>

#include "teco/tape.hpp"

namespace teco::model {

using nn::DType;
using nn::Tensor;

void TecoConfig::validate() const {
  if (resolution < 16) nn::fail("teco config: resolution must be >= 16");
  if (enc_downsample < 1 || enc_downsample > 2) {
    nn::fail("teco config: enc_downsample must be 1 or 2");
  }
  if (resolution % (1 << enc_downsample) != 0) {
    nn::fail("teco config: resolution not divisible by encoder downsampling");
  }
  const int le = latent_extent();
  if (temporal_downsample < 1 ||
      (temporal_downsample & (temporal_downsample - 1)) != 0 ||
      le % temporal_downsample != 0) {
    nn::fail("teco config: temporal downsample factor must be a power of two "
             "dividing the latent extent");
  }
  if (!(droploss_keep_rate > 0.0 && droploss_keep_rate <= 1.0)) {
    nn::fail("teco config: droploss_keep_rate must lie in (0, 1]");
  }
  if (sequence_length < 2) nn::fail("teco config: sequence_length must be >= 2");
  if (pixel_mode && (pixel_bins < 2 || pixel_bins > 256)) {
    nn::fail("teco config: pixel_bins must lie in [2, 256]");
  }
  if (temporal_width % temporal_heads != 0 ||
      prior_width % prior_heads != 0) {
    nn::fail("teco config: attention width not divisible by heads");
  }
  if (action_vocab < 1) nn::fail("teco config: empty action vocabulary");
}

std::vector<int64_t> droploss_select(int64_t t, double keep_rate, Rng& rng) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0)) {
    nn::fail("droploss_select: keep_rate must lie in (0, 1]");
  }
  if (t < 2) nn::fail("droploss_select: need at least 2 timesteps");
  const int64_t pool = t - 1;  // timesteps {1, .., t-1}
  int64_t keep = std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(keep_rate * double(pool))));
  keep = std::min(keep, pool);
  std::vector<int64_t> order(static_cast<size_t>(pool));
  for (int64_t i = 0; i < pool; ++i) order[static_cast<size_t>(i)] = i + 1;
  for (int64_t i = 0; i < keep; ++i) {
    const int64_t j = i + static_cast<int64_t>(
        rng.next_below(static_cast<uint64_t>(pool - i)));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  std::vector<int64_t> kept(order.begin(), order.begin() + keep);
  std::sort(kept.begin(), kept.end());
  return kept;
}

TecoModel::TecoModel(const TecoConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  Rng book_rng = rng.split(0xB00C);
  book_ = vq::Codebook(cfg.codebook_size, cfg.embed_dim, book_rng);
  book_.embeddings.set_requires_grad(true);

  const int w1 = cfg.enc_width;
  const int w2 = cfg.enc_width * 2;
  if (cfg.enc_downsample == 2) {
    enc1_ = nn::Conv2d(reg_, "enc1", 6, w1, 3, 2, 1, rng);
    enc2_ = nn::Conv2d(reg_, "enc2", w1, w2, 3, 2, 1, rng);
  } else {
    enc1_ = nn::Conv2d(reg_, "enc1", 6, w1, 3, 2, 1, rng);
    enc2_ = nn::Conv2d(reg_, "enc2", w1, w2, 3, 1, 1, rng);
  }
  enc3_ = nn::Conv2d(reg_, "enc3", w2, w2, 3, 1, 1, rng);
  enc_out_ = nn::Conv2d(reg_, "enc_out", w2, cfg.embed_dim, 1, 1, 0, rng);

  const int f = cfg.temporal_downsample;
  const int ce = cfg.latent_extent() / f;
  const int64_t cells = static_cast<int64_t>(ce) * ce;
  temporal_down_ = nn::Conv2d(reg_, "t_down", cfg.embed_dim,
                              cfg.temporal_conv_channels, f, f, 0, rng);
  temporal_in_ = nn::Linear(reg_, "t_in", cells * cfg.temporal_conv_channels,
                            cfg.temporal_width, rng);
  start_emb_ = reg_.add("t_start",
                        Tensor::randn({1, cfg.temporal_width}, rng, 0.05));
  temporal_pos_ = reg_.add(
      "t_pos", Tensor::randn({cfg.sequence_length, cfg.temporal_width}, rng,
                             0.05));
  action_emb_ = reg_.add(
      "t_action", Tensor::randn({cfg.action_vocab + 1, cfg.temporal_width},
                                rng, 0.05));
  for (int i = 0; i < cfg.temporal_layers; ++i) {
    temporal_blocks_.emplace_back(reg_, "t_block" + std::to_string(i),
                                  cfg.temporal_width, cfg.temporal_heads,
                                  cfg.temporal_ff, rng);
  }
  temporal_ln_ = nn::LayerNorm(reg_, "t_ln", cfg.temporal_width);
  temporal_out_ = nn::Linear(reg_, "t_out", cfg.temporal_width,
                             cells * cfg.temporal_conv_channels, rng);
  temporal_up_ = nn::ConvTranspose2d(reg_, "t_up", cfg.temporal_conv_channels,
                                     cfg.h_channels, f, f, rng);

  const int dec_in_ch = static_cast<int>(cfg.embed_dim) + cfg.h_channels;
  dec_in_ = nn::Conv2d(reg_, "dec_in", dec_in_ch, cfg.dec_width * 2, 3, 1, 1,
                       rng);
  if (cfg.pixel_mode) {
    int chan = cfg.dec_width * 2;
    for (int i = 0; i < cfg.enc_downsample; ++i) {
      const int next = cfg.dec_width;
      dec_ups_.emplace_back(reg_, "dec_up" + std::to_string(i), chan, next, 2,
                            2, rng);
      chan = next;
    }
    dec_out_ = nn::Conv2d(reg_, "dec_out", chan, 3 * cfg.pixel_bins, 3, 1, 1,
                          rng, 0.5);
  }
  // codec mode defers the reconstruction head to set_codec
  init_key_ = rng.split(0xDEC0).next_u64();

  prior_token_emb_ = reg_.add(
      "p_token", Tensor::randn({cfg.codebook_size + 1, cfg.prior_width}, rng,
                               0.05));
  prior_pos_ = reg_.add(
      "p_pos", Tensor::randn({cfg_.latent_positions(), cfg.prior_width}, rng,
                             0.05));
  prior_in_ = nn::Linear(reg_, "p_in", cfg.prior_width + cfg.h_channels,
                         cfg.prior_width, rng);
  for (int i = 0; i < cfg.prior_layers; ++i) {
    prior_blocks_.emplace_back(reg_, "p_block" + std::to_string(i),
                               cfg.prior_width, cfg.prior_heads, cfg.prior_ff,
                               rng);
  }
  prior_ln_ = nn::LayerNorm(reg_, "p_ln", cfg.prior_width);
  prior_head_ = nn::Linear(reg_, "p_head", cfg.prior_width, cfg.codebook_size,
                           rng, 0.5);

  reg_.add("codebook", book_.embeddings);
}

void TecoModel::set_codec(std::shared_ptr<codec::FrameCodec> codec) {
  if (cfg_.pixel_mode) nn::fail("set_codec: model is in pixel mode");
  if (!codec) nn::fail("set_codec: null codec");
  if (codec->config().latent_extent() != cfg_.latent_extent()) {
    nn::fail("set_codec: codec latent extent " +
             std::to_string(codec->config().latent_extent()) +
             " does not match model latent extent " +
             std::to_string(cfg_.latent_extent()));
  }
  codec_ = std::move(codec);
  if (dec_out_.w.defined()) return;  // re-attach keeps the trained head
  // reconstruction head over codec tokens at latent resolution
  Rng rng(init_key_);
  dec_out_ = nn::Conv2d(reg_, "dec_out", cfg_.dec_width * 2,
                        static_cast<int>(codec_->config().codebook_size), 1, 1,
                        0, rng, 0.5);
}

int64_t TecoModel::recon_vocab() const {
  if (cfg_.pixel_mode) return cfg_.pixel_bins;
  if (!codec_) nn::fail("recon_vocab: codec mode without an attached codec");
  return codec_->config().codebook_size;
}

float TecoModel::input_float(uint8_t byte) const {
  if (cfg_.pixel_mode) {
    return pixel_bin_center(pixel_bin(byte, cfg_.pixel_bins), cfg_.pixel_bins) /
           255.f;
  }
  return byte / 255.f;
}

Tensor TecoModel::encoder_features(const Tensor& x_in) {
  Tensor h = nn::gelu(enc1_(x_in));
  h = nn::gelu(enc2_(h));
  h = nn::gelu(enc3_(h));
  h = enc_out_(h);  // [N, D, le, le]
  const int64_t n = h.dim(0);
  const int64_t le = cfg_.latent_extent();
  return nn::reshape(nn::permute(h, {0, 2, 3, 1}),
                     {n * le * le, cfg_.embed_dim});
}

Tensor TecoModel::frames_to_input(const SeqBatch& batch) const {
  const int64_t s = batch.s, t = batch.t, r = batch.h;
  Tensor x = Tensor::zeros({s * t, 6, r, r});
  float* out = x.f32();
  const int64_t plane = r * r;
  const int64_t frame_bytes = plane * 3;
  for (int64_t si = 0; si < s; ++si) {
    for (int64_t ti = 0; ti < t; ++ti) {
      const uint8_t* cur = batch.frames.data() + (si * t + ti) * frame_bytes;
      const uint8_t* prev =
          ti > 0 ? batch.frames.data() + (si * t + ti - 1) * frame_bytes
                 : nullptr;
      float* dst = out + (si * t + ti) * 6 * plane;
      for (int64_t p = 0; p < plane; ++p) {
        for (int64_t c = 0; c < 3; ++c) {
          dst[c * plane + p] = input_float(cur[p * 3 + c]);
          dst[(3 + c) * plane + p] =
              prev ? input_float(prev[p * 3 + c]) : 0.f;
        }
      }
    }
  }
  return x;
}

StepEncoding TecoModel::encode_step(const Tensor& x_t, const Tensor& x_prev,
                                    bool is_first, bool update_usage) {
  const int64_t r = cfg_.resolution;
  if (x_t.rank() != 3 || x_t.dim(0) != 3 || x_t.dim(1) != r ||
      x_t.dim(2) != r) {
    nn::fail("encode_step: x_t must be [3," + std::to_string(r) + "," +
             std::to_string(r) + "], got " + nn::shape_str(x_t.shape()));
  }
  if (!is_first && x_t.shape() != x_prev.shape()) {
    nn::fail("encode_step: x_t and x_prev shapes differ");
  }
  Tensor x_in = Tensor::zeros({1, 6, r, r});
  const int64_t plane = r * r;
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t p = 0; p < plane; ++p) {
      x_in.f32()[c * plane + p] = static_cast<float>(x_t.at(c * plane + p));
      x_in.f32()[(3 + c) * plane + p] =
          is_first ? 0.f : static_cast<float>(x_prev.at(c * plane + p));
    }
  }
  Tensor rows = encoder_features(x_in);
  StepEncoding out;
  if (is_first) {
    out.z_rows = nn::l2_normalize_rows(rows);
    out.quantized = false;
    return out;
  }
  vq::RowQuantization q = vq::quantize_rows(rows, book_, update_usage);
  out.z_rows = q.quantized;
  out.quantized = true;
  const int le = cfg_.latent_extent();
  out.grid = TokenGrid(le, le);
  out.grid.indices = q.indices;
  return out;
}

TecoModel::EncodeOut TecoModel::encode_sequences(const SeqBatch& batch,
                                                 bool update_usage) {
  const int64_t s = batch.s, t = batch.t;
  const int64_t p = cfg_.latent_positions();
  Tensor x_in = frames_to_input(batch);
  Tensor rows_all = encoder_features(x_in);  // [(s*t)*p, D], order (s,t,pos)

  std::vector<int64_t> idx_first, idx_rest;
  idx_first.reserve(static_cast<size_t>(s * p));
  idx_rest.reserve(static_cast<size_t>(s * (t - 1) * p));
  for (int64_t si = 0; si < s; ++si) {
    for (int64_t pi = 0; pi < p; ++pi) {
      idx_first.push_back((si * t) * p + pi);
    }
    for (int64_t ti = 1; ti < t; ++ti) {
      for (int64_t pi = 0; pi < p; ++pi) {
        idx_rest.push_back((si * t + ti) * p + pi);
      }
    }
  }
  Tensor rows_first =
      nn::l2_normalize_rows(nn::gather_rows(rows_all, idx_first));
  Tensor rows_rest = nn::gather_rows(rows_all, idx_rest);
  vq::RowQuantization rq = vq::quantize_rows(rows_rest, book_, update_usage);

  // reassemble (s,t,pos) order from the two blocks
  std::vector<int64_t> perm(static_cast<size_t>(s * t * p));
  for (int64_t si = 0; si < s; ++si) {
    for (int64_t ti = 0; ti < t; ++ti) {
      for (int64_t pi = 0; pi < p; ++pi) {
        const int64_t dst = (si * t + ti) * p + pi;
        perm[static_cast<size_t>(dst)] =
            ti == 0 ? si * p + pi
                    : s * p + (si * (t - 1) + (ti - 1)) * p + pi;
      }
    }
  }
  EncodeOut out;
  out.z_rows_all =
      nn::gather_rows(nn::concat({rows_first, rq.quantized}, 0), perm);
  out.tokens = std::move(rq.indices);
  out.l_vq = vq::vq_loss(rq, cfg_.vq_beta);
  return out;
}

Tensor TecoModel::temporal_context(const Tensor& z_rows_all, int64_t s,
                                   int64_t t,
                                   const std::vector<uint8_t>& actions,
                                   const std::vector<uint8_t>& action_mask) {
  if (t > cfg_.sequence_length) {
    nn::fail("temporal_context: sequence length " + std::to_string(t) +
             " exceeds configured maximum " +
             std::to_string(cfg_.sequence_length));
  }
  if (static_cast<int64_t>(actions.size()) != s * t ||
      static_cast<int64_t>(action_mask.size()) != s * t) {
    nn::fail("temporal_context: action arrays must be [S*T]");
  }
  const int64_t p = cfg_.latent_positions();
  const int le = cfg_.latent_extent();
  if (z_rows_all.dim(0) != s * t * p) {
    nn::fail("temporal_context: latent rows " +
             nn::shape_str(z_rows_all.shape()) + " do not cover " +
             std::to_string(s * t * p) + " positions");
  }
  // [S*T*P, D] -> [S*T, D, le, le] -> strided conv -> flatten per step
  Tensor grid = nn::permute(
      nn::reshape(z_rows_all, {s * t, le, le, cfg_.embed_dim}), {0, 3, 1, 2});
  Tensor down = nn::gelu(temporal_down_(grid));
  const int64_t cells = down.dim(2) * down.dim(3);
  Tensor tokens = temporal_in_(
      nn::reshape(down, {s * t, cfg_.temporal_conv_channels * cells}));
  tokens = nn::reshape(tokens, {s, t, cfg_.temporal_width});

  // shift right: position i sees z_{i-1}; position 0 sees the start token
  std::vector<int64_t> zero_ids(static_cast<size_t>(s), 0);
  Tensor start = nn::reshape(nn::gather_rows(start_emb_, zero_ids),
                             {s, 1, cfg_.temporal_width});
  Tensor shifted = nn::concat({start, nn::slice(tokens, 1, 0, t - 1)}, 1);

  // absolute position and per-step action embeddings
  std::vector<int64_t> pos_ids;
  std::vector<int64_t> act_ids;
  pos_ids.reserve(static_cast<size_t>(s * t));
  act_ids.reserve(static_cast<size_t>(s * t));
  for (int64_t si = 0; si < s; ++si) {
    for (int64_t ti = 0; ti < t; ++ti) {
      pos_ids.push_back(ti);
      const size_t flat = static_cast<size_t>(si * t + ti);
      const uint8_t a = actions[flat];
      if (a >= cfg_.action_vocab) {
        nn::fail("temporal_context: action id " + std::to_string(a) +
                 " outside vocabulary of " + std::to_string(cfg_.action_vocab));
      }
      act_ids.push_back(action_mask[flat] ? cfg_.action_vocab : a);
    }
  }
  Tensor pos = nn::reshape(nn::gather_rows(temporal_pos_, pos_ids),
                           {s, t, cfg_.temporal_width});
  Tensor act = nn::reshape(nn::gather_rows(action_emb_, act_ids),
                           {s, t, cfg_.temporal_width});
  Tensor x = nn::add(nn::add(shifted, pos), act);
  for (const auto& block : temporal_blocks_) {
    x = block(x, /*causal=*/true, cfg_.context_window);
  }
  x = temporal_ln_(x);
  Tensor mid = temporal_out_(nn::reshape(x, {s * t, cfg_.temporal_width}));
  const int ce = le / cfg_.temporal_downsample;
  Tensor up_in = nn::gelu(
      nn::reshape(mid, {s * t, cfg_.temporal_conv_channels, ce, ce}));
  return temporal_up_(up_in);  // [S*T, Ch, le, le]
}

Tensor TecoModel::decode_step(const Tensor& z, const Tensor& h) {
  if (!dec_out_.w.defined()) {
    nn::fail("decode_step: codec mode requires set_codec before decoding");
  }
  if (z.rank() != 4 || h.rank() != 4 || z.dim(0) != h.dim(0) ||
      z.dim(2) != h.dim(2) || z.dim(3) != h.dim(3)) {
    nn::fail("decode_step: z " + nn::shape_str(z.shape()) + " and h " +
             nn::shape_str(h.shape()) + " spatial extents must agree");
  }
  Tensor x = nn::gelu(dec_in_(nn::concat({z, h}, 1)));
  for (const auto& up : dec_ups_) x = nn::gelu(up(x));
  Tensor logits = dec_out_(x);  // [N, C, r, r]
  const int64_t n = logits.dim(0);
  const int64_t r = logits.dim(2);
  const int64_t vocab = recon_vocab();
  Tensor rows = nn::reshape(nn::permute(logits, {0, 2, 3, 1}),
                            {n * r * r * (logits.dim(1) / vocab), vocab});
  return rows;
}

Tensor TecoModel::prior_step(const std::vector<TokenGrid>& masked,
                             const Tensor& h) {
  const int64_t n = static_cast<int64_t>(masked.size());
  const int le = cfg_.latent_extent();
  const int64_t p = cfg_.latent_positions();
  if (h.rank() != 4 || h.dim(0) != n || h.dim(2) != le || h.dim(3) != le) {
    nn::fail("prior_step: h " + nn::shape_str(h.shape()) +
             " does not match " + std::to_string(n) + " grids of extent " +
             std::to_string(le));
  }
  std::vector<int64_t> ids;
  ids.reserve(static_cast<size_t>(n * p));
  for (const TokenGrid& g : masked) {
    if (g.h != le || g.w != le) {
      nn::fail("prior_step: grid extents mismatch");
    }
    for (int64_t i = 0; i < p; ++i) {
      const bool hidden = g.mask[static_cast<size_t>(i)] != 0;
      const int32_t tok = g.indices[static_cast<size_t>(i)];
      if (!hidden && (tok < 0 || tok >= cfg_.codebook_size)) {
        nn::fail("prior_step: token id outside codebook");
      }
      ids.push_back(hidden ? cfg_.codebook_size : tok);
    }
  }
  Tensor tok = nn::gather_rows(prior_token_emb_, ids);  // [N*P, Wp]
  Tensor h_rows = nn::reshape(nn::permute(h, {0, 2, 3, 1}),
                              {n * p, cfg_.h_channels});
  Tensor x = prior_in_(nn::concat({tok, h_rows}, 1));
  std::vector<int64_t> pos_ids;
  pos_ids.reserve(static_cast<size_t>(n * p));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < p; ++j) pos_ids.push_back(j);
  }
  Tensor pos = nn::gather_rows(prior_pos_, pos_ids);
  x = nn::reshape(nn::add(x, pos), {n, p, cfg_.prior_width});
  for (const auto& block : prior_blocks_) {
    x = block(x, /*causal=*/false);
  }
  x = prior_ln_(x);
  return prior_head_(nn::reshape(x, {n * p, cfg_.prior_width}));
}

std::vector<int64_t> TecoModel::recon_targets(
    const SeqBatch& batch, const std::vector<int64_t>& kept_flat) {
  std::vector<int64_t> targets;
  const int64_t r = batch.h;
  const int64_t frame_bytes = r * r * 3;
  if (cfg_.pixel_mode) {
    targets.reserve(kept_flat.size() * static_cast<size_t>(frame_bytes));
    for (int64_t flat : kept_flat) {
      const uint8_t* f = batch.frames.data() + flat * frame_bytes;
      for (int64_t i = 0; i < frame_bytes; ++i) {
        targets.push_back(pixel_bin(f[i], cfg_.pixel_bins));
      }
    }
    return targets;
  }
  if (!codec_) nn::fail("teco_loss: codec mode without an attached codec");
  // tokens of each kept frame under the frozen codec
  const int64_t n = static_cast<int64_t>(kept_flat.size());
  Tensor frames = Tensor::zeros({n, 3, r, r});
  const int64_t plane = r * r;
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t* f = batch.frames.data() + kept_flat[static_cast<size_t>(i)] * frame_bytes;
    for (int64_t pnt = 0; pnt < plane; ++pnt) {
      for (int64_t c = 0; c < 3; ++c) {
        frames.f32()[(i * 3 + c) * plane + pnt] = f[pnt * 3 + c] / 255.f;
      }
    }
  }
  auto grids = codec_->encode(frames);
  for (const TokenGrid& g : grids) {
    for (int32_t tok : g.indices) targets.push_back(tok);
  }
  return targets;
}

LossBreakdown TecoModel::teco_loss(const SeqBatch& batch, Rng& rng) {
  return teco_loss(batch, rng, cfg_.droploss_keep_rate);
}

LossBreakdown TecoModel::teco_loss(const SeqBatch& batch, Rng& rng,
                                   double keep_rate) {
  if (batch.s < 1 || batch.t < 2) {
    nn::fail("teco_loss: batch must hold at least one sequence of >= 2 frames");
  }
  if (batch.h != cfg_.resolution || batch.w != cfg_.resolution) {
    nn::fail("teco_loss: frame resolution mismatch");
  }
  const int64_t s = batch.s, t = batch.t;
  const int64_t p = cfg_.latent_positions();
  const int le = cfg_.latent_extent();

  EncodeOut enc = encode_sequences(batch, /*update_usage=*/true);
  Tensor h_all = temporal_context(enc.z_rows_all, s, t, batch.actions,
                                  batch.action_mask);

  LossBreakdown out;
  out.l_vq = enc.l_vq;
  out.kept_timesteps = droploss_select(t, keep_rate, rng);

  std::vector<int64_t> kept_flat;
  std::vector<int64_t> kept_rows;
  for (int64_t si = 0; si < s; ++si) {
    for (int64_t ti : out.kept_timesteps) {
      kept_flat.push_back(si * t + ti);
      for (int64_t pi = 0; pi < p; ++pi) {
        kept_rows.push_back((si * t + ti) * p + pi);
      }
    }
  }
  const int64_t n_kept = static_cast<int64_t>(kept_flat.size());

  Tensor h_kept = nn::gather_rows(h_all, kept_flat);
  Tensor z_kept = nn::permute(
      nn::reshape(nn::gather_rows(enc.z_rows_all, kept_rows),
                  {n_kept, le, le, cfg_.embed_dim}),
      {0, 3, 1, 2});

  // reconstruction over kept steps
  Tensor rec_logits = decode_step(z_kept, h_kept);
  std::vector<int64_t> rec_targets = recon_targets(batch, kept_flat);
  out.l_recon = nn::cross_entropy_rows(rec_logits, rec_targets);
  {
    nn::NoGrad guard;
    auto arg = nn::argmax_rows(rec_logits);
    int64_t hit = 0;
    for (size_t i = 0; i < arg.size(); ++i) {
      hit += arg[i] == rec_targets[i];
    }
    out.recon_accuracy = double(hit) / double(arg.size());
  }

  // Masked prior over kept steps. Each step contributes the mean CE over
  // its own masked positions (weights 1/masked-count), and steps average
  // uniformly, so the DropLoss subsample is an exactly unbiased estimator
  // of the all-steps value.
  std::vector<TokenGrid> grids;
  std::vector<int64_t> prior_targets;
  std::vector<float> prior_weights;
  grids.reserve(static_cast<size_t>(n_kept));
  for (int64_t si = 0; si < s; ++si) {
    for (int64_t ti : out.kept_timesteps) {
      TokenGrid g(le, le);
      const int64_t base = (si * (t - 1) + (ti - 1)) * p;
      for (int64_t pi = 0; pi < p; ++pi) {
        g.indices[static_cast<size_t>(pi)] =
            enc.tokens[static_cast<size_t>(base + pi)];
      }
      g.mask = mg::sample_training_mask(le, le, rng.next_double(), rng);
      const float inv_masked = 1.f / static_cast<float>(g.masked_count());
      for (int64_t pi = 0; pi < p; ++pi) {
        prior_targets.push_back(g.indices[static_cast<size_t>(pi)]);
        prior_weights.push_back(g.mask[static_cast<size_t>(pi)] ? inv_masked
                                                                : 0.f);
      }
      grids.push_back(std::move(g));
    }
  }
  Tensor prior_logits = prior_step(grids, h_kept);
  out.l_prior = nn::cross_entropy_rows(prior_logits, prior_targets,
                                       &prior_weights);
  {
    nn::NoGrad guard;
    auto arg = nn::argmax_rows(prior_logits);
    int64_t hit = 0, total = 0;
    for (size_t i = 0; i < arg.size(); ++i) {
      if (prior_weights[i] == 0.f) continue;
      ++total;
      hit += arg[i] == prior_targets[i];
    }
    out.prior_accuracy = total ? double(hit) / double(total) : 0.0;
  }

  out.l_total = nn::add(nn::add(out.l_vq, out.l_recon), out.l_prior);
  return out;
}

TecoModel::Accuracy TecoModel::evaluate_accuracy(const SeqBatch& batch,
                                                 Rng& rng, double mask_t) {
  nn::NoGrad guard;
  const int64_t s = batch.s, t = batch.t;
  const int64_t p = cfg_.latent_positions();
  const int le = cfg_.latent_extent();
  EncodeOut enc = encode_sequences(batch, /*update_usage=*/false);
  Tensor h_all = temporal_context(enc.z_rows_all, s, t, batch.actions,
                                  batch.action_mask);
  std::vector<int64_t> kept_flat, kept_rows;
  for (int64_t si = 0; si < s; ++si) {
    for (int64_t ti = 1; ti < t; ++ti) {
      kept_flat.push_back(si * t + ti);
      for (int64_t pi = 0; pi < p; ++pi) {
        kept_rows.push_back((si * t + ti) * p + pi);
      }
    }
  }
  const int64_t n_kept = static_cast<int64_t>(kept_flat.size());
  Tensor h_kept = nn::gather_rows(h_all, kept_flat);
  Tensor z_kept = nn::permute(
      nn::reshape(nn::gather_rows(enc.z_rows_all, kept_rows),
                  {n_kept, le, le, cfg_.embed_dim}),
      {0, 3, 1, 2});
  Accuracy acc;
  {
    Tensor logits = decode_step(z_kept, h_kept);
    auto targets = recon_targets(batch, kept_flat);
    auto arg = nn::argmax_rows(logits);
    int64_t hit = 0;
    for (size_t i = 0; i < arg.size(); ++i) hit += arg[i] == targets[i];
    acc.recon = double(hit) / double(arg.size());
  }
  {
    std::vector<TokenGrid> grids;
    std::vector<int64_t> targets;
    std::vector<uint8_t> hidden;
    for (int64_t si = 0; si < s; ++si) {
      for (int64_t ti = 1; ti < t; ++ti) {
        TokenGrid g(le, le);
        const int64_t base = (si * (t - 1) + (ti - 1)) * p;
        for (int64_t pi = 0; pi < p; ++pi) {
          g.indices[static_cast<size_t>(pi)] =
              enc.tokens[static_cast<size_t>(base + pi)];
        }
        g.mask = mg::sample_training_mask(le, le, mask_t, rng);
        for (int64_t pi = 0; pi < p; ++pi) {
          targets.push_back(g.indices[static_cast<size_t>(pi)]);
          hidden.push_back(g.mask[static_cast<size_t>(pi)]);
        }
        grids.push_back(std::move(g));
      }
    }
    Tensor logits = prior_step(grids, h_kept);
    auto arg = nn::argmax_rows(logits);
    int64_t hit = 0, total = 0;
    for (size_t i = 0; i < arg.size(); ++i) {
      if (!hidden[i]) continue;
      ++total;
      hit += arg[i] == targets[i];
    }
    acc.prior = total ? double(hit) / double(total) : 0.0;
  }
  return acc;
}

std::vector<double> TecoModel::per_step_losses(const SeqBatch& batch,
                                               Rng& rng) {
  nn::NoGrad guard;
  const int64_t s = batch.s, t = batch.t;
  const int64_t p = cfg_.latent_positions();
  const int le = cfg_.latent_extent();
  EncodeOut enc = encode_sequences(batch, /*update_usage=*/false);
  Tensor h_all = temporal_context(enc.z_rows_all, s, t, batch.actions,
                                  batch.action_mask);
  std::vector<int64_t> all_flat, all_rows;
  for (int64_t si = 0; si < s; ++si) {
    for (int64_t ti = 1; ti < t; ++ti) {
      all_flat.push_back(si * t + ti);
      for (int64_t pi = 0; pi < p; ++pi) {
        all_rows.push_back((si * t + ti) * p + pi);
      }
    }
  }
  const int64_t n_items = static_cast<int64_t>(all_flat.size());
  Tensor h_kept = nn::gather_rows(h_all, all_flat);
  Tensor z_kept = nn::permute(
      nn::reshape(nn::gather_rows(enc.z_rows_all, all_rows),
                  {n_items, le, le, cfg_.embed_dim}),
      {0, 3, 1, 2});

  auto row_ce = [](const Tensor& logits, int64_t row, int64_t vocab,
                   int64_t target) {
    double mx = logits.at(row * vocab);
    for (int64_t j = 1; j < vocab; ++j) {
      mx = std::max(mx, logits.at(row * vocab + j));
    }
    double z = 0;
    for (int64_t j = 0; j < vocab; ++j) {
      z += std::exp(logits.at(row * vocab + j) - mx);
    }
    return std::log(z) + mx - logits.at(row * vocab + target);
  };

  std::vector<double> per_step(static_cast<size_t>(t - 1), 0.0);

  Tensor rec_logits = decode_step(z_kept, h_kept);
  std::vector<int64_t> rec_targets = recon_targets(batch, all_flat);
  const int64_t rec_rows = rec_logits.dim(0) / n_items;
  const int64_t rec_vocab = rec_logits.dim(1);
  for (int64_t i = 0; i < n_items; ++i) {
    const int64_t ti = all_flat[static_cast<size_t>(i)] % t;
    double acc = 0;
    for (int64_t rr = 0; rr < rec_rows; ++rr) {
      acc += row_ce(rec_logits, i * rec_rows + rr, rec_vocab,
                    rec_targets[static_cast<size_t>(i * rec_rows + rr)]);
    }
    per_step[static_cast<size_t>(ti - 1)] += acc / double(rec_rows * s);
  }

  std::vector<TokenGrid> grids;
  for (int64_t i = 0; i < n_items; ++i) {
    const int64_t si = all_flat[static_cast<size_t>(i)] / t;
    const int64_t ti = all_flat[static_cast<size_t>(i)] % t;
    TokenGrid g(le, le);
    const int64_t base = (si * (t - 1) + (ti - 1)) * p;
    for (int64_t pi = 0; pi < p; ++pi) {
      g.indices[static_cast<size_t>(pi)] =
          enc.tokens[static_cast<size_t>(base + pi)];
    }
    g.mask = mg::sample_training_mask(le, le, rng.next_double(), rng);
    grids.push_back(std::move(g));
  }
  Tensor prior_logits = prior_step(grids, h_kept);
  for (int64_t i = 0; i < n_items; ++i) {
    const int64_t ti = all_flat[static_cast<size_t>(i)] % t;
    const TokenGrid& g = grids[static_cast<size_t>(i)];
    double acc = 0;
    int64_t masked = 0;
    for (int64_t pi = 0; pi < p; ++pi) {
      if (!g.mask[static_cast<size_t>(pi)]) continue;
      acc += row_ce(prior_logits, i * p + pi, cfg_.codebook_size,
                    g.indices[static_cast<size_t>(pi)]);
      ++masked;
    }
    per_step[static_cast<size_t>(ti - 1)] += acc / double(masked * s);
  }
  return per_step;
}

RolloutResult TecoModel::rollout(const uint8_t* context_frames,
                                 int64_t context_len,
                                 const std::vector<uint8_t>& actions,
                                 const std::vector<uint8_t>& action_mask,
                                 int64_t horizon,
                                 const mg::SamplerConfig& sampler, Rng& rng) {
  if (horizon < 0) nn::fail("rollout: negative horizon rejected");
  if (context_len < 1) nn::fail("rollout: need at least one context frame");
  const int64_t total = context_len + horizon;
  if (total > cfg_.sequence_length) {
    nn::fail("rollout: context+horizon exceeds configured sequence length");
  }
  if (static_cast<int64_t>(actions.size()) < total ||
      static_cast<int64_t>(action_mask.size()) < total) {
    nn::fail("rollout: actions must cover context plus horizon");
  }
  nn::NoGrad guard;
  const int64_t r = cfg_.resolution;
  const int64_t frame_bytes = r * r * 3;
  const int le = cfg_.latent_extent();
  const int64_t p = cfg_.latent_positions();

  RolloutResult out;
  out.frames.assign(context_frames, context_frames + context_len * frame_bytes);
  if (horizon == 0) return out;

  auto frame_tensor = [&](const uint8_t* bytes) {
    Tensor f = Tensor::zeros({3, r, r});
    for (int64_t pnt = 0; pnt < r * r; ++pnt) {
      for (int64_t c = 0; c < 3; ++c) {
        f.f32()[c * r * r + pnt] = input_float(bytes[pnt * 3 + c]);
      }
    }
    return f;
  };

  std::vector<Tensor> z_steps;
  std::vector<Tensor> frame_tensors;
  for (int64_t t = 0; t < context_len; ++t) {
    frame_tensors.push_back(frame_tensor(out.frames.data() + t * frame_bytes));
    StepEncoding enc =
        t == 0 ? encode_step(frame_tensors[0], frame_tensors[0], true)
               : encode_step(frame_tensors[static_cast<size_t>(t)],
                             frame_tensors[static_cast<size_t>(t - 1)], false);
    z_steps.push_back(enc.z_rows);
  }

  Tensor e_n = nn::l2_normalize_rows(book_.embeddings);
  for (int64_t step = context_len; step < total; ++step) {
    // h for the next step: temporal pass over steps [0, step]; the shift
    // drops the final z slot, so a zero placeholder stands in for z_step.
    std::vector<Tensor> cat = z_steps;
    cat.push_back(Tensor::zeros({p, cfg_.embed_dim}));
    Tensor z_cat = nn::concat(cat, 0);
    std::vector<uint8_t> act(actions.begin(), actions.begin() + step + 1);
    std::vector<uint8_t> msk(action_mask.begin(),
                             action_mask.begin() + step + 1);
    Tensor h_all = temporal_context(z_cat, 1, step + 1, act, msk);
    Tensor h_t = nn::gather_rows(h_all, {step});  // [1, Ch, le, le]

    mg::TokenPredictor predictor = [&](const TokenGrid& g) {
      return prior_step({g}, h_t);
    };
    mg::DecodeStats stats;
    const auto t0 = std::chrono::steady_clock::now();
    TokenGrid z_grid = mg::decode(predictor, le, le, cfg_.codebook_size,
                                  sampler, rng, &stats);
    out.prior_decode_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.prior_forward_calls += stats.forward_calls;
    out.tokens.push_back(z_grid);

    std::vector<int64_t> ids(z_grid.indices.begin(), z_grid.indices.end());
    Tensor z_rows = nn::gather_rows(e_n, ids);
    Tensor z_grid_t = nn::permute(
        nn::reshape(z_rows, {1, le, le, cfg_.embed_dim}), {0, 3, 1, 2});
    Tensor logits = decode_step(z_grid_t, h_t);
    auto arg = nn::argmax_rows(logits);

    std::vector<uint8_t> frame(static_cast<size_t>(frame_bytes), 0);
    if (cfg_.pixel_mode) {
      for (int64_t i = 0; i < frame_bytes; ++i) {
        frame[static_cast<size_t>(i)] = pixel_bin_center(
            static_cast<int>(arg[static_cast<size_t>(i)]), cfg_.pixel_bins);
      }
    } else {
      TokenGrid fg(le, le);
      for (int64_t i = 0; i < p; ++i) {
        fg.indices[static_cast<size_t>(i)] =
            static_cast<int32_t>(arg[static_cast<size_t>(i)]);
      }
      Tensor decoded = codec_->decode_tokens({fg});  // [1,3,r,r] in [0,1]
      for (int64_t pnt = 0; pnt < r * r; ++pnt) {
        for (int64_t c = 0; c < 3; ++c) {
          frame[static_cast<size_t>(pnt * 3 + c)] = static_cast<uint8_t>(
              std::lround(std::clamp(decoded.at(c * r * r + pnt), 0.0, 1.0) *
                          255.0));
        }
      }
    }
    out.frames.insert(out.frames.end(), frame.begin(), frame.end());
    frame_tensors.push_back(frame_tensor(frame.data()));
    StepEncoding enc = encode_step(frame_tensors.back(),
                                   frame_tensors[frame_tensors.size() - 2],
                                   false);
    z_steps.push_back(enc.z_rows);
  }
  return out;
}

}  // namespace teco::model
