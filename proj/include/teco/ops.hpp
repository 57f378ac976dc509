#pragma once

// Differentiable operations over Tensor. Every op validates shapes up
// front, computes its forward value, and (when a tape is active and an
// input participates) records a backward closure. Reductions and matrix
// products use a fixed association order, so results are reproducible for
// a given kernel table and thread count.
//
// Broadcasting is deliberately limited to trailing-axis affine parameters
// (add_bias / layer_norm gain+bias) and per-channel bias; anything else
// requires an explicit reshape.

#include <vector>

#include "teco/tape.hpp"
#include "teco/tensor.hpp"

namespace teco::nn {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);

// ---- structure ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);
// Rows of x (leading axis) selected by index, in order; indices may repeat.
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& indices);
Tensor stop_gradient(const Tensor& x);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
// x: [..., F], bias: [F]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x: [N, C, ...spatial], bias: [C]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// ---- convolution (cross-correlation semantics) ----
// x: [N,I,H,W], w: [O,I,Kh,Kw] -> [N,O,H',W'], H' = (H+2p-Kh)/s + 1
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
// Exact adjoint of conv2d under the same (w, stride, pad):
// x: [N,O,H',W'], w: [O,I,Kh,Kw] -> [N,I,H,W], H = (H'-1)s + Kh - 2p
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, int stride,
                        int pad = 0);
// x: [N,I,T,H,W], w: [O,I,Kt,Kh,Kw], per-axis stride/pad
Tensor conv3d(const Tensor& x, const Tensor& w, const int stride[3],
              const int pad[3]);

// ---- normalization / attention ----
// Trailing-axis layer norm, epsilon 1e-5. gain/bias: [F].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
// Rows (trailing axis) scaled to unit L2 norm.
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);
// q/k/v: [T,C] or [B,T,C], split into heads. causal=true masks strictly
// future positions; window > 0 additionally restricts position i to keys in
// [i-window+1, i] (causal only).
Tensor attention_qkv(const Tensor& q, const Tensor& k, const Tensor& v,
                     int heads, bool causal, int window = 0);
// Self-attention with Q=K=V=x.
Tensor attention(const Tensor& x, int heads, bool causal, int window = 0);
inline Tensor causal_attention(const Tensor& x, int heads) {
  return attention(x, heads, true);
}

// ---- softmax / losses / reductions ----
Tensor softmax_last(const Tensor& x);
// logits: [V]; -log softmax(logits)[target]
Tensor softmax_cross_entropy(const Tensor& logits, int64_t target);
// logits: [N,V]; weighted mean of per-row CE. weights=nullptr -> mean.
// Rows with weight 0 receive exactly zero gradient.
Tensor cross_entropy_rows(const Tensor& logits,
                          const std::vector<int64_t>& targets,
                          const std::vector<float>* weights = nullptr);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// Mean over all axes after the first `lead` (e.g. global average pool).
Tensor mean_trailing(const Tensor& x, int lead);

// ---- non-differentiable utilities ----
std::vector<int64_t> argmax_rows(const Tensor& x);  // x: [N,V]
void add_inplace(Tensor& dst, const Tensor& src);
void fill_(Tensor& dst, double value);

}  // namespace teco::nn
