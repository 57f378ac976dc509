#include <cmath>
#include <numbers>

#include "ops_common.hpp"
#include "teco/ops.hpp"

namespace teco::nn {

using detail::check_defined;
using detail::check_same_shape;

using detail::accumulate_move;
using detail::mul_raw;
using detail::scale_raw;

namespace {

template <typename T>
void add_fwd(const T* a, const T* b, T* o, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active().vadd(a, b, o, n);
  } else {
    kern::ref::vadd(a, b, o, n);
  }
}

template <typename T>
void sub_fwd(const T* a, const T* b, T* o, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active().vsub(a, b, o, n);
  } else {
    kern::ref::vsub(a, b, o, n);
  }
}

}  // namespace

void add_inplace(Tensor& dst, const Tensor& src) {
  check_same_shape(dst, src, "add_inplace");
  if (dst.dtype() == DType::F32) {
    kern::active().vadd(dst.f32(), src.f32(), dst.f32(), dst.numel());
  } else {
    kern::ref::vadd(dst.f64(), src.f64(), dst.f64(), dst.numel());
  }
}

void fill_(Tensor& dst, double value) {
  const int64_t n = dst.numel();
  for (int64_t i = 0; i < n; ++i) dst.set(i, value);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  if (a.dtype() == DType::F32) {
    add_fwd(a.f32(), b.f32(), out.f32(), a.numel());
  } else {
    add_fwd(a.f64(), b.f64(), out.f64(), a.numel());
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&a, &b})) {
    auto sa = tape->slot_for_input(a);
    auto sb = tape->slot_for_input(b);
    auto so = tape->slot_for_output(out);
    tape->record([sa, sb, so] {
      if (!so->has) return;
      accumulate_grad(sa, so->grad);
      accumulate_grad(sb, so->grad);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_defined(a, "sub");
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  if (a.dtype() == DType::F32) {
    sub_fwd(a.f32(), b.f32(), out.f32(), a.numel());
  } else {
    sub_fwd(a.f64(), b.f64(), out.f64(), a.numel());
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&a, &b})) {
    auto sa = tape->slot_for_input(a);
    auto sb = tape->slot_for_input(b);
    auto so = tape->slot_for_output(out);
    tape->record([sa, sb, so] {
      if (!so->has) return;
      accumulate_grad(sa, so->grad);
      accumulate_move(sb, scale_raw(so->grad, -1.0));
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_same_shape(a, b, "mul");
  Tensor out = mul_raw(a, b);
  if (Tape* tape = Tape::active(); tape && tape->wants({&a, &b})) {
    auto sa = tape->slot_for_input(a);
    auto sb = tape->slot_for_input(b);
    auto so = tape->slot_for_output(out);
    tape->record([sa, sb, so, a, b] {
      if (!so->has) return;
      if (sa) accumulate_move(sa, mul_raw(so->grad, b));
      if (sb) accumulate_move(sb, mul_raw(so->grad, a));
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  check_defined(a, "add_scalar");
  Tensor out = a.clone();
  const int64_t n = out.numel();
  if (out.dtype() == DType::F32) {
    float* p = out.f32();
    const float sf = static_cast<float>(s);
    for (int64_t i = 0; i < n; ++i) p[i] += sf;
  } else {
    double* p = out.f64();
    for (int64_t i = 0; i < n; ++i) p[i] += s;
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&a})) {
    auto sa = tape->slot_for_input(a);
    auto so = tape->slot_for_output(out);
    tape->record([sa, so] {
      if (so->has) accumulate_grad(sa, so->grad);
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
  check_defined(a, "mul_scalar");
  Tensor out = scale_raw(a, s);
  if (Tape* tape = Tape::active(); tape && tape->wants({&a})) {
    auto sa = tape->slot_for_input(a);
    auto so = tape->slot_for_output(out);
    tape->record([sa, so, s] {
      if (so->has) accumulate_move(sa, scale_raw(so->grad, s));
    });
  }
  return out;
}

namespace {

template <typename T>
void gelu_fwd(const T* x, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    const T v = x[i];
    o[i] = T(0.5) * v * (T(1) + std::erf(v * T(std::numbers::sqrt2_v<double> / 2.0)));
  }
}

template <typename T>
void gelu_bwd(const T* x, const T* g, T* dx, int64_t n) {
  constexpr T inv_sqrt2 = T(0.7071067811865475244);
  constexpr T inv_sqrt2pi = T(0.3989422804014326779);
  for (int64_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
    dx[i] = g[i] * (cdf + v * pdf);
  }
}

template <typename T>
T sigmoid_one(T v) {
  if (v >= T(0)) {
    return T(1) / (T(1) + std::exp(-v));
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

}  // namespace

Tensor gelu(const Tensor& x) {
  check_defined(x, "gelu");
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  if (x.dtype() == DType::F32) {
    gelu_fwd(x.f32(), out.f32(), x.numel());
  } else {
    gelu_fwd(x.f64(), out.f64(), x.numel());
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    tape->record([sx, so, x] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(x.shape(), x.dtype());
      if (x.dtype() == DType::F32) {
        gelu_bwd(x.f32(), so->grad.f32(), dx.f32(), x.numel());
      } else {
        gelu_bwd(x.f64(), so->grad.f64(), dx.f64(), x.numel());
      }
      accumulate_move(sx, std::move(dx));
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  check_defined(x, "sigmoid");
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  const int64_t n = x.numel();
  if (x.dtype() == DType::F32) {
    for (int64_t i = 0; i < n; ++i) out.f32()[i] = sigmoid_one(x.f32()[i]);
  } else {
    for (int64_t i = 0; i < n; ++i) out.f64()[i] = sigmoid_one(x.f64()[i]);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    tape->record([sx, so, out, n] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(out.shape(), out.dtype());
      if (out.dtype() == DType::F32) {
        const float* s = out.f32();
        const float* g = so->grad.f32();
        for (int64_t i = 0; i < n; ++i) dx.f32()[i] = g[i] * s[i] * (1.f - s[i]);
      } else {
        const double* s = out.f64();
        const double* g = so->grad.f64();
        for (int64_t i = 0; i < n; ++i) dx.f64()[i] = g[i] * s[i] * (1. - s[i]);
      }
      accumulate_move(sx, std::move(dx));
    });
  }
  return out;
}

Tensor softplus(const Tensor& x) {
  check_defined(x, "softplus");
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  const int64_t n = x.numel();
  auto splus = [](auto v) {
    using T = decltype(v);
    return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
  };
  if (x.dtype() == DType::F32) {
    for (int64_t i = 0; i < n; ++i) out.f32()[i] = splus(x.f32()[i]);
  } else {
    for (int64_t i = 0; i < n; ++i) out.f64()[i] = splus(x.f64()[i]);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    tape->record([sx, so, x, n] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(x.shape(), x.dtype());
      if (x.dtype() == DType::F32) {
        for (int64_t i = 0; i < n; ++i) {
          dx.f32()[i] = so->grad.f32()[i] * sigmoid_one(x.f32()[i]);
        }
      } else {
        for (int64_t i = 0; i < n; ++i) {
          dx.f64()[i] = so->grad.f64()[i] * sigmoid_one(x.f64()[i]);
        }
      }
      accumulate_move(sx, std::move(dx));
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  check_defined(x, "sum_all");
  double total = 0;
  if (x.dtype() == DType::F32) {
    total = kern::active().vsum(x.f32(), x.numel());
  } else {
    total = kern::ref::vsum(x.f64(), x.numel());
  }
  Tensor out = Tensor::scalar(total, x.dtype());
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    Shape shape = x.shape();
    DType dt = x.dtype();
    tape->record([sx, so, shape, dt] {
      if (!so->has) return;
      accumulate_move(sx, Tensor::full(shape, so->grad.at(0), dt));
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  check_defined(x, "mean_all");
  return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_trailing(const Tensor& x, int lead) {
  check_defined(x, "mean_trailing");
  if (lead < 0 || lead > x.rank()) fail("mean_trailing: bad lead axis count");
  Shape out_shape(x.shape().begin(), x.shape().begin() + lead);
  if (out_shape.empty()) out_shape = {1};
  const int64_t rows = shape_numel(out_shape);
  const int64_t width = x.numel() / std::max<int64_t>(rows, 1);
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  const double inv = 1.0 / static_cast<double>(width);
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0;
    if (x.dtype() == DType::F32) {
      acc = kern::active().vsum(x.f32() + r * width, width);
    } else {
      acc = kern::ref::vsum(x.f64() + r * width, width);
    }
    out.set(r, acc * inv);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    Shape xshape = x.shape();
    tape->record([sx, so, xshape, rows, width, inv] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(xshape, so->grad.dtype());
      for (int64_t r = 0; r < rows; ++r) {
        const double gv = so->grad.at(r) * inv;
        if (dx.dtype() == DType::F32) {
          float* p = dx.f32() + r * width;
          for (int64_t i = 0; i < width; ++i) p[i] = static_cast<float>(gv);
        } else {
          double* p = dx.f64() + r * width;
          for (int64_t i = 0; i < width; ++i) p[i] = gv;
        }
      }
      accumulate_move(sx, std::move(dx));
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  check_defined(x, "add_bias");
  check_defined(bias, "add_bias");
  if (bias.rank() != 1 || bias.dim(0) != x.dim(x.rank() - 1)) {
    fail("add_bias: bias " + shape_str(bias.shape()) +
         " does not match trailing axis of " + shape_str(x.shape()));
  }
  const int64_t f = bias.dim(0);
  const int64_t rows = x.numel() / f;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  if (x.dtype() == DType::F32) {
    const float* b = bias.f32();
    for (int64_t r = 0; r < rows; ++r) {
      kern::active().vadd(x.f32() + r * f, b, out.f32() + r * f, f);
    }
  } else {
    const double* b = bias.f64();
    for (int64_t r = 0; r < rows; ++r) {
      kern::ref::vadd(x.f64() + r * f, b, out.f64() + r * f, f);
    }
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x, &bias})) {
    auto sx = tape->slot_for_input(x);
    auto sb = tape->slot_for_input(bias);
    auto so = tape->slot_for_output(out);
    tape->record([sx, sb, so, rows, f] {
      if (!so->has) return;
      accumulate_grad(sx, so->grad);
      if (sb) {
        Tensor db = Tensor::zeros({f}, so->grad.dtype());
        if (db.dtype() == DType::F32) {
          for (int64_t r = 0; r < rows; ++r) {
            kern::active().vadd(db.f32(), so->grad.f32() + r * f, db.f32(), f);
          }
        } else {
          for (int64_t r = 0; r < rows; ++r) {
            kern::ref::vadd(db.f64(), so->grad.f64() + r * f, db.f64(), f);
          }
        }
        accumulate_move(sb, std::move(db));
      }
    });
  }
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  check_defined(x, "add_channel_bias");
  check_defined(bias, "add_channel_bias");
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    fail("add_channel_bias: bias " + shape_str(bias.shape()) +
         " does not match channel axis of " + shape_str(x.shape()));
  }
  const int64_t n = x.dim(0);
  const int64_t c = x.dim(1);
  const int64_t spatial = x.numel() / (n * c);
  Tensor out = x.clone();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const double bv = bias.at(ch);
      const int64_t base = (i * c + ch) * spatial;
      if (x.dtype() == DType::F32) {
        float* p = out.f32() + base;
        for (int64_t s = 0; s < spatial; ++s) p[s] += static_cast<float>(bv);
      } else {
        double* p = out.f64() + base;
        for (int64_t s = 0; s < spatial; ++s) p[s] += bv;
      }
    }
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x, &bias})) {
    auto sx = tape->slot_for_input(x);
    auto sb = tape->slot_for_input(bias);
    auto so = tape->slot_for_output(out);
    tape->record([sx, sb, so, n, c, spatial] {
      if (!so->has) return;
      accumulate_grad(sx, so->grad);
      if (sb) {
        Tensor db = Tensor::zeros({c}, so->grad.dtype());
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (i * c + ch) * spatial;
            double acc = 0;
            if (so->grad.dtype() == DType::F32) {
              acc = kern::active().vsum(so->grad.f32() + base, spatial);
            } else {
              acc = kern::ref::vsum(so->grad.f64() + base, spatial);
            }
            db.set(ch, db.at(ch) + acc);
          }
        }
        accumulate_move(sb, std::move(db));
      }
    });
  }
  return out;
}

}  // namespace teco::nn
