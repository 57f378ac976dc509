#pragma once

// Small layer structs over the op set, with named-parameter registration
// for the optimizer and checkpointing. Initialization follows fan-in
// scaling; output heads take an explicit gain.

#include <string>
#include <utility>
#include <vector>

#include "teco/ops.hpp"
#include "teco/rng.hpp"

namespace teco::nn {

class ParamRegistry {
 public:
  Tensor add(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.emplace_back(name, t);
    return t;
  }
  const std::vector<std::pair<std::string, Tensor>>& named() const {
    return params_;
  }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& [name, t] : params_) out.push_back(t);
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int64_t in, int64_t out,
         Rng& rng, double gain = 1.0) {
    w = reg.add(name + ".w",
                Tensor::randn({in, out}, rng, gain / std::sqrt(double(in))));
    b = reg.add(name + ".b", Tensor::zeros({out}));
  }
  Tensor operator()(const Tensor& x) const {
    return add_bias(matmul(x, w), b);
  }
};

struct Conv2d {
  Tensor w;  // [O,I,K,K]
  Tensor b;  // [O]
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParamRegistry& reg, const std::string& name, int64_t in, int64_t out,
         int k, int stride_, int pad_, Rng& rng, double gain = 1.0)
      : stride(stride_), pad(pad_) {
    const double fan_in = double(in) * k * k;
    w = reg.add(name + ".w",
                Tensor::randn({out, in, k, k}, rng, gain / std::sqrt(fan_in)));
    b = reg.add(name + ".b", Tensor::zeros({out}));
  }
  Tensor operator()(const Tensor& x) const {
    return add_channel_bias(conv2d(x, w, stride, pad), b);
  }
};

struct ConvTranspose2d {
  Tensor w;  // [I,O,K,K] in conv2d layout terms: maps I -> O
  Tensor b;  // [O]
  int stride = 1;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParamRegistry& reg, const std::string& name, int64_t in,
                  int64_t out, int k, int stride_, Rng& rng, double gain = 1.0)
      : stride(stride_) {
    const double fan_in = double(in) * k * k / double(stride_ * stride_);
    w = reg.add(name + ".w",
                Tensor::randn({in, out, k, k}, rng, gain / std::sqrt(fan_in)));
    b = reg.add(name + ".b", Tensor::zeros({out}));
  }
  Tensor operator()(const Tensor& x) const {
    return add_channel_bias(conv_transpose2d(x, w, stride), b);
  }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParamRegistry& reg, const std::string& name, int64_t width) {
    gain = reg.add(name + ".gain", Tensor::full({width}, 1.0));
    bias = reg.add(name + ".bias", Tensor::zeros({width}));
  }
  Tensor operator()(const Tensor& x) const {
    return layer_norm(x, gain, bias);
  }
};

// Pre-norm transformer block; window applies only with causal attention.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Linear wq, wk, wv, wo, ff1, ff2;
  int heads = 1;

  TransformerBlock() = default;
  TransformerBlock(ParamRegistry& reg, const std::string& name, int64_t width,
                   int heads_, int64_t ff_width, Rng& rng)
      : heads(heads_) {
    ln1 = LayerNorm(reg, name + ".ln1", width);
    wq = Linear(reg, name + ".wq", width, width, rng);
    wk = Linear(reg, name + ".wk", width, width, rng);
    wv = Linear(reg, name + ".wv", width, width, rng);
    wo = Linear(reg, name + ".wo", width, width, rng, 0.5);
    ln2 = LayerNorm(reg, name + ".ln2", width);
    ff1 = Linear(reg, name + ".ff1", width, ff_width, rng);
    ff2 = Linear(reg, name + ".ff2", ff_width, width, rng, 0.5);
  }

  // x: [B,T,C]
  Tensor operator()(const Tensor& x, bool causal, int window = 0) const {
    const int64_t b = x.dim(0), t = x.dim(1), c = x.dim(2);
    Tensor h = ln1(x);
    Tensor rows = reshape(h, {b * t, c});
    Tensor q = reshape(wq(rows), {b, t, c});
    Tensor k = reshape(wk(rows), {b, t, c});
    Tensor v = reshape(wv(rows), {b, t, c});
    Tensor a = attention_qkv(q, k, v, heads, causal, window);
    Tensor x1 = add(x, reshape(wo(reshape(a, {b * t, c})), {b, t, c}));
    Tensor h2 = reshape(ln2(x1), {b * t, c});
    Tensor f = ff2(gelu(ff1(h2)));
    return add(x1, reshape(f, {b, t, c}));
  }
};

}  // namespace teco::nn
