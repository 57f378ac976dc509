#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "teco/vq.hpp"
#include "testutil.hpp"

using namespace teco;
using namespace teco::nn;
using testutil::rand_tensor;

namespace {

vq::Codebook axis_codebook() {
  Rng rng(0);
  vq::Codebook book(2, 2, rng, DType::F64);
  NoGrad guard;
  book.embeddings.set(0, 1.0);
  book.embeddings.set(1, 0.0);
  book.embeddings.set(2, 0.0);
  book.embeddings.set(3, 1.0);
  return book;
}

}  // namespace

TEST_CASE("quantize: exact codebook hit and hand-checked nearest neighbour") {
  Rng rng(3);
  vq::Codebook book(8, 4, rng, DType::F64);
  // input equal to codebook row 5
  Tensor h = Tensor::zeros({1, 1, 4}, DType::F64);
  for (int j = 0; j < 4; ++j) h.set(j, book.embeddings.at(5 * 4 + j));
  auto res = vq::quantize(h, book);
  CHECK(res.indices.indices[0] == 5);
  CHECK(res.commitment_loss.at(0) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(res.codebook_loss.at(0) == doctest::Approx(0.0).epsilon(1e-10));

  // K=2 rows (1,0),(0,1); normalized input (0.8,0.6): distances 0.4 vs 0.8
  vq::Codebook axes = axis_codebook();
  Tensor p = Tensor::from_doubles({1, 1, 2}, {0.8, 0.6});
  auto r2 = vq::quantize(p, axes);
  CHECK(r2.indices.indices[0] == 0);
  CHECK(r2.commitment_loss.at(0) == doctest::Approx(0.4));

  // usage accounting: 2 calls x 1 position + this check's calls
  CHECK(book.total_hits() == 1);
  CHECK(axes.total_hits() == 1);

  Tensor bad = Tensor::zeros({1, 1, 3}, DType::F64);
  CHECK_THROWS_AS(vq::quantize(bad, book), Error);
}

TEST_CASE("vq_loss: exact hit zero, single-position (1+beta)d^2, beta routing") {
  vq::Codebook axes = axis_codebook();
  Tensor h = Tensor::from_doubles({1, 1, 2}, {0.6, 0.8});
  auto res = vq::quantize(h, axes);  // nearest is (0,1), d^2 = 0.36+0.04 = 0.4
  const double d2 = 0.6 * 0.6 + 0.2 * 0.2;
  CHECK(vq::vq_loss(res).at(0) == doctest::Approx((1.0 + 0.25) * d2));

  // gradient reaches h only through the commitment term
  Tensor h2 = Tensor::from_doubles({1, 1, 2}, {0.6, 0.8});
  h2.set_requires_grad(true);
  axes.embeddings.set_requires_grad(true);
  {
    Tape tape;
    auto r = vq::quantize(h2, axes);
    tape.backward(r.codebook_loss);
    CHECK_FALSE(tape.grad(h2).defined());  // sg(h) blocks the input side
    CHECK(tape.grad(axes.embeddings).defined());
  }
  {
    Tape tape;
    auto r = vq::quantize(h2, axes);
    tape.backward(r.commitment_loss);
    CHECK(tape.grad(h2).defined());
    CHECK_FALSE(tape.grad(axes.embeddings).defined());
  }
}

TEST_CASE("straight-through: value, identity Jacobian, substitution check") {
  Rng rng(4);
  Tensor h = rand_tensor({5, 3}, rng);
  Tensor q = rand_tensor({5, 3}, rng);
  {
    Tape tape;
    h.set_requires_grad(true);
    Tensor st = vq::straight_through(h, q);
    for (int64_t i = 0; i < st.numel(); ++i) {
      CHECK(st.at(i) == doctest::Approx(q.at(i)));
    }
    tape.backward(sum_all(st));
    Tensor g = tape.grad(h);
    for (int64_t i = 0; i < g.numel(); ++i) CHECK(g.at(i) == 1.0);
  }
  // downstream loss gradient equals the same loss's gradient at q
  Tensor w = rand_tensor({3, 2}, rng);
  Tensor gst, gq;
  {
    Tape tape;
    Tensor st = vq::straight_through(h, q);
    Tensor y = matmul(st, w);
    tape.backward(sum_all(mul(y, y)));
    gst = tape.grad(h).clone();
  }
  {
    Tape tape;
    Tensor qq = q.clone();
    qq.set_requires_grad(true);
    Tensor y = matmul(qq, w);
    tape.backward(sum_all(mul(y, y)));
    gq = tape.grad(qq).clone();
  }
  for (int64_t i = 0; i < gst.numel(); ++i) {
    CHECK(gst.at(i) == doctest::Approx(gq.at(i)));
  }
  // gradient norm preserved exactly through the boundary
  double n1 = 0, n2 = 0;
  for (int64_t i = 0; i < gst.numel(); ++i) {
    n1 += gst.at(i) * gst.at(i);
    n2 += gq.at(i) * gq.at(i);
  }
  CHECK(n1 == doctest::Approx(n2));
}

TEST_CASE("perplexity: collapse, uniform, (3,1) closed form, zero rejected") {
  CHECK(vq::usage_perplexity({10, 0, 0, 0}) == doctest::Approx(1.0));
  CHECK(vq::usage_perplexity({7, 7, 7, 7}) == doctest::Approx(4.0));
  const double h = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  CHECK(vq::usage_perplexity({3, 1}) == doctest::Approx(std::exp(h)));
  CHECK(vq::usage_perplexity({3, 1}) == doctest::Approx(1.7548).epsilon(1e-3));
  CHECK_THROWS_AS(vq::usage_perplexity({0, 0}), Error);
}

TEST_CASE("argmin-L2 equals argmax-cosine; quantization idempotent") {
  Rng rng(5);
  vq::Codebook book(16, 8, rng, DType::F64);
  Tensor h = rand_tensor({6, 7, 8}, rng, 2.0);
  auto res = vq::quantize(h, book);
  // cosine oracle on raw (unnormalized) vectors
  for (int64_t p = 0; p < 42; ++p) {
    double best = -2;
    int32_t arg = 0;
    double hn = 0;
    for (int j = 0; j < 8; ++j) hn += h.at(p * 8 + j) * h.at(p * 8 + j);
    hn = std::sqrt(hn);
    for (int32_t c = 0; c < 16; ++c) {
      double dot = 0, en = 0;
      for (int j = 0; j < 8; ++j) {
        dot += h.at(p * 8 + j) * book.embeddings.at(c * 8 + j);
        en += book.embeddings.at(c * 8 + j) * book.embeddings.at(c * 8 + j);
      }
      const double cos = dot / (hn * std::sqrt(en));
      if (cos > best) {
        best = cos;
        arg = c;
      }
    }
    CHECK(res.indices.indices[static_cast<size_t>(p)] == arg);
  }
  // idempotence: re-quantizing the quantized output returns the same codes
  auto res2 = vq::quantize(res.quantized, book);
  CHECK(res2.indices.indices == res.indices.indices);
  // quantized rows are exactly rows of the (normalized) codebook
  Tensor e_n = l2_normalize_rows(book.embeddings);
  for (int64_t p = 0; p < 42; ++p) {
    const int32_t c = res.indices.indices[static_cast<size_t>(p)];
    for (int j = 0; j < 8; ++j) {
      CHECK(res.quantized.at(p * 8 + j) == doctest::Approx(e_n.at(c * 8 + j)));
    }
  }
}

TEST_CASE("normalize_embeddings restores unit rows") {
  Rng rng(6);
  vq::Codebook book(4, 3, rng, DType::F64);
  {
    NoGrad guard;
    for (int64_t i = 0; i < book.embeddings.numel(); ++i) {
      book.embeddings.set(i, book.embeddings.at(i) * 3.7);
    }
  }
  book.normalize_embeddings();
  for (int64_t r = 0; r < 4; ++r) {
    double ss = 0;
    for (int64_t j = 0; j < 3; ++j) {
      ss += book.embeddings.at(r * 3 + j) * book.embeddings.at(r * 3 + j);
    }
    CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-6);
  }
}
