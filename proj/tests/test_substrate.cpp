#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "teco/optim.hpp"
#include "teco/ops.hpp"
#include "testutil.hpp"

using namespace teco;
using namespace teco::nn;
using testutil::gradcheck;
using testutil::rand_tensor;

namespace {

// Independent oracles kept deliberately naive.

Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::zeros({m, n}, a.dtype());
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += a.at(i * k + p) * b.at(p * n + j);
      c.set(i * n + j, acc);
    }
  }
  return c;
}

Tensor conv2d_oracle(const Tensor& x, const Tensor& w, int stride, int pad) {
  const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  Tensor out = Tensor::zeros({n, co, ho, wo}, x.dtype());
  for (int64_t b = 0; b < n; ++b)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t y = 0; y < ho; ++y)
        for (int64_t xo = 0; xo < wo; ++xo) {
          double acc = 0;
          for (int64_t c = 0; c < ci; ++c)
            for (int64_t dy = 0; dy < kh; ++dy)
              for (int64_t dx = 0; dx < kw; ++dx) {
                const int64_t iy = y * stride + dy - pad;
                const int64_t ix = xo * stride + dx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x.at(((b * ci + c) * h + iy) * wd + ix) *
                       w.at(((o * ci + c) * kh + dy) * kw + dx);
              }
          out.set(((b * co + o) * ho + y) * wo + xo, acc);
        }
  return out;
}

double dot_all(const Tensor& a, const Tensor& b) {
  double acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a.at(i) * b.at(i);
  return acc;
}

}  // namespace

TEST_CASE("matmul: identity, 1x1, and triple-loop oracle") {
  Rng rng(1);
  Tensor eye = Tensor::zeros({3, 3}, DType::F64);
  for (int i = 0; i < 3; ++i) eye.set(i * 3 + i, 1.0);
  Tensor m = rand_tensor({3, 3}, rng);
  Tensor prod = matmul(eye, m);
  for (int64_t i = 0; i < 9; ++i) CHECK(prod.at(i) == doctest::Approx(m.at(i)));

  Tensor a = Tensor::from_doubles({1, 1}, {2.0});
  Tensor b = Tensor::from_doubles({1, 1}, {3.0});
  CHECK(matmul(a, b).at(0) == doctest::Approx(6.0));

  Tensor x = rand_tensor({4, 5}, rng);
  Tensor y = rand_tensor({5, 3}, rng);
  Tensor got = matmul(x, y);
  Tensor want = matmul_oracle(x, y);
  for (int64_t i = 0; i < got.numel(); ++i) {
    CHECK(std::abs(got.at(i) - want.at(i)) < 1e-6);
  }

  CHECK_THROWS_AS(matmul(rand_tensor({2, 3}, rng), rand_tensor({4, 2}, rng)),
                  Error);
}

TEST_CASE("conv2d: trivial kernels and 6-loop oracle") {
  Rng rng(2);
  // 1x1 kernel of value 1 -> identity
  Tensor x = rand_tensor({1, 1, 4, 4}, rng);
  Tensor w1 = Tensor::from_doubles({1, 1, 1, 1}, {1.0});
  Tensor same = conv2d(x, w1, 1, 0);
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(same.at(i) == doctest::Approx(x.at(i)));
  }
  // all-ones 3x3 on all-ones input -> 9
  Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0, DType::F64);
  Tensor w9 = Tensor::full({1, 1, 3, 3}, 1.0, DType::F64);
  Tensor nine = conv2d(ones, w9, 1, 0);
  CHECK(nine.numel() == 1);
  CHECK(nine.at(0) == doctest::Approx(9.0));
  // random case vs oracle
  Tensor xr = rand_tensor({2, 3, 7, 6}, rng);
  Tensor wr = rand_tensor({4, 3, 3, 3}, rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      Tensor got = conv2d(xr, wr, stride, pad);
      Tensor want = conv2d_oracle(xr, wr, stride, pad);
      REQUIRE(got.shape() == want.shape());
      for (int64_t i = 0; i < got.numel(); ++i) {
        CHECK(std::abs(got.at(i) - want.at(i)) < 1e-6);
      }
    }
  }
  // kernel larger than padded input
  CHECK_THROWS_AS(conv2d(rand_tensor({1, 1, 2, 2}, rng),
                         rand_tensor({1, 1, 5, 5}, rng), 1, 0),
                  Error);
}

TEST_CASE("conv_transpose2d: identity, adjointness, upsampling arithmetic") {
  Rng rng(3);
  Tensor x = rand_tensor({1, 1, 5, 5}, rng);
  Tensor w1 = Tensor::from_doubles({1, 1, 1, 1}, {1.0});
  Tensor same = conv_transpose2d(x, w1, 1);
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(same.at(i) == doctest::Approx(x.at(i)));
  }

  // <conv2d(x,w), y> == <x, conv_transpose2d(y,w)>; extents chosen so the
  // strided cover is exact and the adjoint has the same shape as x
  Tensor xa = rand_tensor({2, 3, 9, 9}, rng);
  Tensor wa = rand_tensor({5, 3, 3, 3}, rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      Tensor fwd = conv2d(xa, wa, stride, pad);
      Tensor y = rand_tensor(fwd.shape(), rng);
      Tensor adj = conv_transpose2d(y, wa, stride, pad);
      REQUIRE(adj.shape() == xa.shape());
      CHECK(std::abs(dot_all(fwd, y) - dot_all(xa, adj)) <
            1e-5 * std::max(1.0, std::abs(dot_all(fwd, y))));
    }
  }

  // stride-2, K=2, pad 0 doubles the spatial extent
  Tensor xs = rand_tensor({1, 2, 4, 4}, rng);
  Tensor ws = rand_tensor({2, 3, 2, 2}, rng);
  Tensor up = conv_transpose2d(xs, ws, 2);
  CHECK(up.shape() == Shape{1, 3, 8, 8});
}

TEST_CASE("layer_norm: constant input, [1,3] closed form, moments") {
  Tensor gain = Tensor::full({2}, 1.0, DType::F64);
  Tensor bias = Tensor::zeros({2}, DType::F64);
  Tensor constant = Tensor::full({3, 2}, 4.2, DType::F64);
  Tensor z = layer_norm(constant, gain, bias);
  for (int64_t i = 0; i < z.numel(); ++i) {
    CHECK(std::abs(z.at(i)) < 1e-3);  // epsilon keeps it near zero
  }

  Tensor v = Tensor::from_doubles({1, 2}, {1.0, 3.0});
  Tensor out = layer_norm(v, gain, bias);
  CHECK(out.at(0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(out.at(1) == doctest::Approx(1.0).epsilon(1e-4));

  Rng rng(4);
  Tensor x = rand_tensor({1, 64}, rng, 3.0);
  Tensor y = layer_norm(x, Tensor::full({64}, 1.0, DType::F64),
                        Tensor::zeros({64}, DType::F64));
  double mean = 0, var = 0;
  for (int64_t i = 0; i < 64; ++i) mean += y.at(i);
  mean /= 64;
  for (int64_t i = 0; i < 64; ++i) var += (y.at(i) - mean) * (y.at(i) - mean);
  var /= 64;
  CHECK(std::abs(mean) < 1e-4);
  CHECK(std::abs(var - 1.0) < 1e-4);
}

TEST_CASE("causal attention: length-1, strict causality, 2-token oracle") {
  Rng rng(5);
  // length 1: weight 1.0 on itself -> output equals input
  Tensor x1 = rand_tensor({1, 4}, rng);
  Tensor o1 = causal_attention(x1, 2);
  for (int64_t i = 0; i < 4; ++i) CHECK(o1.at(i) == doctest::Approx(x1.at(i)));

  // perturbing position t+1 leaves outputs at <= t bit-identical
  Tensor xs = rand_tensor({6, 8}, rng, 1.0, DType::F32);
  Tensor base = causal_attention(xs, 4);
  Tensor xs2 = xs.clone();
  xs2.set(5 * 8 + 3, 17.0);
  Tensor pert = causal_attention(xs2, 4);
  for (int64_t t = 0; t < 5; ++t) {
    for (int64_t j = 0; j < 8; ++j) {
      CHECK(base.f32()[t * 8 + j] == pert.f32()[t * 8 + j]);
    }
  }

  // 2-token single-head hand computation
  Tensor x2 = Tensor::from_doubles({2, 2}, {0.3, -0.7, 1.1, 0.4});
  Tensor got = causal_attention(x2, 1);
  // row 0: weight 1 on itself
  CHECK(got.at(0) == doctest::Approx(0.3));
  CHECK(got.at(1) == doctest::Approx(-0.7));
  // row 1: softmax([q1.k0, q1.k1]/sqrt(2)) applied to v rows
  const double s0 = (1.1 * 0.3 + 0.4 * -0.7) / std::sqrt(2.0);
  const double s1 = (1.1 * 1.1 + 0.4 * 0.4) / std::sqrt(2.0);
  const double m = std::max(s0, s1);
  const double p0 = std::exp(s0 - m), p1 = std::exp(s1 - m);
  const double z = p0 + p1;
  CHECK(got.at(2) == doctest::Approx((p0 * 0.3 + p1 * 1.1) / z));
  CHECK(got.at(3) == doctest::Approx((p0 * -0.7 + p1 * 0.4) / z));

  CHECK_THROWS_AS(causal_attention(rand_tensor({3, 5}, rng), 2), Error);

  // window=1 restricts every position to itself -> output equals v
  Tensor q = rand_tensor({5, 4}, rng), k = rand_tensor({5, 4}, rng),
         v = rand_tensor({5, 4}, rng);
  Tensor w1 = attention_qkv(q, k, v, 2, true, 1);
  for (int64_t i = 0; i < v.numel(); ++i) {
    CHECK(w1.at(i) == doctest::Approx(v.at(i)));
  }
  // window=W: perturbing a position more than W-1 steps back changes nothing
  Tensor xs3 = rand_tensor({8, 4}, rng, 1.0, DType::F32);
  Tensor base3 = attention(xs3, 2, true, 3);
  Tensor xs4 = xs3.clone();
  xs4.set(1 * 4 + 2, 9.0);  // position 1; probe outputs at rows >= 4
  Tensor pert3 = attention(xs4, 2, true, 3);
  for (int64_t t = 4; t < 8; ++t) {
    for (int64_t j = 0; j < 4; ++j) {
      CHECK(base3.f32()[t * 4 + j] == pert3.f32()[t * 4 + j]);
    }
  }
}

TEST_CASE("softmax cross entropy: uniform, spike, high-precision oracle") {
  Tensor uniform = Tensor::full({7}, 0.42, DType::F64);
  CHECK(softmax_cross_entropy(uniform, 3).at(0) ==
        doctest::Approx(std::log(7.0)));

  Tensor spike = Tensor::zeros({5}, DType::F64);
  spike.set(2, 1e9);
  CHECK(softmax_cross_entropy(spike, 2).at(0) == doctest::Approx(0.0));

  Rng rng(6);
  Tensor logits = rand_tensor({11}, rng, 3.0);
  const int64_t target = 4;
  // independent recomputation in long double
  long double mx = logits.at(0);
  for (int64_t i = 1; i < 11; ++i) mx = std::max<long double>(mx, logits.at(i));
  long double zz = 0;
  for (int64_t i = 0; i < 11; ++i) zz += expl(logits.at(i) - mx);
  const long double want = logl(zz) + mx - logits.at(target);
  CHECK(std::abs(static_cast<double>(want) -
                 softmax_cross_entropy(logits, target).at(0)) < 1e-6);

  CHECK_THROWS_AS(softmax_cross_entropy(logits, 11), Error);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, -1), Error);

  // softmax normalizes
  Tensor p = softmax_last(logits);
  double sum = 0;
  for (int64_t i = 0; i < 11; ++i) sum += p.at(i);
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("backward: sum -> ones, <x,x> -> 2x, non-scalar rejected") {
  Rng rng(7);
  Tensor x = rand_tensor({4, 3}, rng);
  {
    Tape tape;
    x.set_requires_grad(true);
    Tensor loss = sum_all(x);
    tape.backward(loss);
    Tensor g = tape.grad(x);
    REQUIRE(g.defined());
    for (int64_t i = 0; i < g.numel(); ++i) CHECK(g.at(i) == 1.0);
  }
  {
    Tape tape;
    Tensor loss = sum_all(mul(x, x));
    tape.backward(loss);
    Tensor g = tape.grad(x);
    for (int64_t i = 0; i < g.numel(); ++i) {
      CHECK(g.at(i) == doctest::Approx(2.0 * x.at(i)));
    }
  }
  {
    Tape tape;
    Tensor y = add(x, x);
    CHECK_THROWS_AS(tape.backward(y), Error);
  }
}

TEST_CASE("gradcheck: every primitive against central differences") {
  Rng rng(1234);
  auto check = [&](const char* name, std::vector<Tensor> params,
                   const std::function<Tensor()>& loss, int coords = 20) {
    auto res = gradcheck(loss, params, rng, coords);
    INFO(name << " max rel err " << res.max_rel_err);
    CHECK(res.max_rel_err < 1e-4);
  };

  {
    Tensor a = rand_tensor({4, 6}, rng), b = rand_tensor({6, 5}, rng);
    check("matmul", {a, b}, [&] { return sum_all(mul(matmul(a, b), matmul(a, b))); });
  }
  {
    Tensor x = rand_tensor({2, 3, 6, 6}, rng), w = rand_tensor({4, 3, 3, 3}, rng);
    check("conv2d", {x, w},
          [&] { return sum_all(mul(conv2d(x, w, 2, 1), conv2d(x, w, 2, 1))); });
  }
  {
    Tensor x = rand_tensor({2, 4, 3, 3}, rng), w = rand_tensor({4, 2, 2, 2}, rng);
    check("conv_transpose2d", {x, w}, [&] {
      Tensor y = conv_transpose2d(x, w, 2);
      return sum_all(mul(y, y));
    });
  }
  {
    Tensor x = rand_tensor({2, 2, 4, 5, 5}, rng);
    Tensor w = rand_tensor({3, 2, 2, 3, 3}, rng);
    const int stride[3] = {2, 2, 2}, pad[3] = {0, 1, 1};
    check("conv3d", {x, w}, [&] {
      Tensor y = conv3d(x, w, stride, pad);
      return sum_all(mul(y, y));
    });
  }
  {
    Tensor x = rand_tensor({5, 8}, rng), g = rand_tensor({8}, rng),
           b = rand_tensor({8}, rng);
    check("layer_norm", {x, g, b}, [&] {
      Tensor y = layer_norm(x, g, b);
      return sum_all(mul(y, y));
    });
  }
  {
    Tensor x = rand_tensor({2, 5, 8}, rng);
    check("causal_attention", {x}, [&] {
      Tensor y = causal_attention(x, 2);
      return sum_all(mul(y, y));
    });
  }
  {
    Tensor x = rand_tensor({4, 6}, rng);
    check("attention(bidirectional)", {x}, [&] {
      Tensor y = attention(x, 3, false);
      return sum_all(mul(y, y));
    });
  }
  {
    Tensor q = rand_tensor({2, 5, 6}, rng), k = rand_tensor({2, 5, 6}, rng),
           v = rand_tensor({2, 5, 6}, rng);
    check("attention_qkv(window=2)", {q, k, v}, [&] {
      Tensor y = attention_qkv(q, k, v, 2, true, 2);
      return sum_all(mul(y, y));
    });
  }
  {
    Tensor l = rand_tensor({9}, rng, 2.0);
    check("softmax_cross_entropy", {l},
          [&] { return softmax_cross_entropy(l, 2); });
  }
  {
    Tensor l = rand_tensor({6, 5}, rng, 2.0);
    std::vector<int64_t> tg = {0, 3, 2, 4, 1, 1};
    std::vector<float> wts = {1, 0, 2, 1, 0, 1};
    check("cross_entropy_rows", {l},
          [&] { return cross_entropy_rows(l, tg, &wts); });
  }
  {
    Tensor x = rand_tensor({3, 7}, rng);
    check("l2_normalize_rows", {x}, [&] {
      Tensor y = l2_normalize_rows(x);
      Tensor z = add_scalar(y, 0.5);
      return sum_all(mul(z, mul(z, z)));
    });
  }
  {
    Tensor x = rand_tensor({4, 5}, rng), b = rand_tensor({5}, rng);
    check("add_bias", {x, b}, [&] {
      Tensor y = add_bias(x, b);
      return sum_all(mul(y, y));
    });
  }
  {
    Tensor x = rand_tensor({2, 3, 4, 4}, rng), b = rand_tensor({3}, rng);
    check("add_channel_bias", {x, b}, [&] {
      Tensor y = add_channel_bias(x, b);
      return sum_all(mul(y, y));
    });
  }
  {
    Tensor x = rand_tensor({3, 4}, rng);
    check("gelu+sigmoid+softplus", {x}, [&] {
      return sum_all(mul(gelu(x), add(sigmoid(x), softplus(x))));
    });
  }
  {
    Tensor x = rand_tensor({6, 4}, rng);
    check("softmax_last", {x}, [&] {
      Tensor p = softmax_last(x);
      return sum_all(mul(p, p));
    });
  }
  {
    Tensor x = rand_tensor({5, 3}, rng);
    check("gather+concat+slice+permute+reshape", {x}, [&] {
      Tensor g = gather_rows(x, {4, 0, 0, 2});
      Tensor c = concat({g, g}, 1);
      Tensor s = slice(c, 0, 1, 3);
      Tensor p = permute(s, {1, 0});
      Tensor r = reshape(p, {18});
      return sum_all(mul(r, r));
    });
  }
  {
    Tensor x = rand_tensor({2, 3, 4}, rng);
    check("mean_trailing", {x}, [&] {
      Tensor m = mean_trailing(x, 2);
      return sum_all(mul(m, m));
    });
  }
}

TEST_CASE("composite conv->norm->attention->CE gradient") {
  Rng rng(77);
  Tensor x = rand_tensor({1, 2, 6, 6}, rng, 0.7);
  Tensor w = rand_tensor({4, 2, 3, 3}, rng, 0.4);
  Tensor gain = Tensor::full({4}, 1.0, DType::F64);
  Tensor bias = Tensor::zeros({4}, DType::F64);
  Tensor proj = rand_tensor({4, 5}, rng, 0.5);
  auto loss = [&] {
    Tensor h = conv2d(x, w, 2, 1);                 // [1,4,3,3]
    Tensor seq = reshape(permute(h, {0, 2, 3, 1}), {9, 4});
    Tensor n = layer_norm(seq, gain, bias);
    Tensor a = causal_attention(n, 2);
    Tensor logits = matmul(a, proj);               // [9,5]
    std::vector<int64_t> targets = {0, 1, 2, 3, 4, 0, 1, 2, 3};
    return cross_entropy_rows(logits, targets);
  };
  auto res = gradcheck(loss, {x, w, gain, bias, proj}, rng, 20);
  INFO("composite max rel err " << res.max_rel_err);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("adam: schedule endpoints and zero-grad fixpoint") {
  AdamConfig cfg;
  cfg.base_lr = 0.01;
  cfg.warmup_steps = 100;
  cfg.total_steps = 1000;
  CHECK(effective_lr(cfg, 0) == 0.0);
  CHECK(effective_lr(cfg, 100) == doctest::Approx(0.01));
  CHECK(effective_lr(cfg, 50) == doctest::Approx(0.005));
  CHECK(effective_lr(cfg, 1000) == doctest::Approx(0.0).epsilon(1e-12));
  // monotone decay after warmup
  CHECK(effective_lr(cfg, 400) > effective_lr(cfg, 700));

  Rng rng(8);
  std::vector<Tensor> params = {rand_tensor({3, 3}, rng, 1.0, DType::F32)};
  Tensor before = params[0].clone();
  AdamState adam(cfg);
  std::vector<Tensor> zero_grads = {Tensor::zeros({3, 3}, DType::F32)};
  adam.step(params, zero_grads);
  for (int64_t i = 0; i < 9; ++i) CHECK(params[0].at(i) == before.at(i));

  std::vector<Tensor> bad = {Tensor::zeros({2, 2}, DType::F32)};
  CHECK_THROWS_AS(adam.step(params, bad), Error);
}

TEST_CASE("straight-through composition via stop_gradient") {
  Rng rng(9);
  Tensor h = rand_tensor({4, 3}, rng);
  Tensor q = rand_tensor({4, 3}, rng);
  Tape tape;
  h.set_requires_grad(true);
  // forward value = q, gradient passes to h unchanged
  Tensor st = add(h, stop_gradient(sub(q, h)));
  for (int64_t i = 0; i < st.numel(); ++i) {
    CHECK(st.at(i) == doctest::Approx(q.at(i)));
  }
  Tensor loss = sum_all(st);
  tape.backward(loss);
  Tensor g = tape.grad(h);
  for (int64_t i = 0; i < g.numel(); ++i) CHECK(g.at(i) == 1.0);
}
