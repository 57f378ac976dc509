#include <cstring>

#include "ops_common.hpp"
#include "teco/ops.hpp"

namespace teco::nn {

using detail::accumulate_move;
using detail::check_defined;

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2) {
    fail("matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
         " and " + shape_str(b.shape()));
  }
  if (a.dtype() != b.dtype()) fail("matmul: dtype mismatch");
  if (a.dim(1) != b.dim(0)) {
    fail("matmul: inner extents disagree, " + shape_str(a.shape()) + " x " +
         shape_str(b.shape()));
  }
  const int m = static_cast<int>(a.dim(0));
  const int k = static_cast<int>(a.dim(1));
  const int n = static_cast<int>(b.dim(1));
  Tensor out = Tensor::zeros({m, n}, a.dtype());
  if (a.dtype() == DType::F32) {
    detail::sgemm_nn_par(a.f32(), b.f32(), out.f32(), m, k, n, false);
  } else {
    kern::ref::gemm_nn(a.f64(), b.f64(), out.f64(), m, k, n, false);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&a, &b})) {
    auto sa = tape->slot_for_input(a);
    auto sb = tape->slot_for_input(b);
    auto so = tape->slot_for_output(out);
    tape->record([sa, sb, so, a, b, m, k, n] {
      if (!so->has) return;
      const Tensor& g = so->grad;
      if (sa) {
        Tensor da = Tensor::zeros({m, k}, a.dtype());
        if (a.dtype() == DType::F32) {
          detail::sgemm_nt_par(g.f32(), b.f32(), da.f32(), m, n, k, false);
        } else {
          kern::ref::gemm_nt(g.f64(), b.f64(), da.f64(), m, n, k, false);
        }
        accumulate_move(sa, std::move(da));
      }
      if (sb) {
        Tensor db = Tensor::zeros({k, n}, a.dtype());
        if (a.dtype() == DType::F32) {
          kern::active().gemm_tn(a.f32(), g.f32(), db.f32(), k, m, n, false);
        } else {
          kern::ref::gemm_tn(a.f64(), g.f64(), db.f64(), k, m, n, false);
        }
        accumulate_move(sb, std::move(db));
      }
    });
  }
  return out;
}

namespace {

struct Conv2dDims {
  int n, ci, h, w;       // input
  int co, kh, kw;        // kernel
  int stride, pad;
  int ho, wo;            // output spatial
  int64_t patch() const { return static_cast<int64_t>(ci) * kh * kw; }
  int64_t positions() const { return static_cast<int64_t>(ho) * wo; }
};

Conv2dDims conv2d_dims(const Tensor& x, const Tensor& w, int stride, int pad,
                       const char* op) {
  if (x.rank() != 4 || w.rank() != 4) {
    fail(std::string(op) + ": expects x [N,C,H,W] and w [O,I,Kh,Kw], got " +
         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (stride < 1) fail(std::string(op) + ": stride must be >= 1");
  if (pad < 0) fail(std::string(op) + ": negative padding");
  Conv2dDims d;
  d.n = static_cast<int>(x.dim(0));
  d.ci = static_cast<int>(w.dim(1));
  d.co = static_cast<int>(w.dim(0));
  d.kh = static_cast<int>(w.dim(2));
  d.kw = static_cast<int>(w.dim(3));
  d.stride = stride;
  d.pad = pad;
  return d;
}

// col layout: [positions, ci*kh*kw]
template <typename T>
void im2col(const T* x, const Conv2dDims& d, T* col) {
  const int64_t ikk = d.patch();
  for (int y = 0; y < d.ho; ++y) {
    for (int xo = 0; xo < d.wo; ++xo) {
      T* dst = col + (static_cast<int64_t>(y) * d.wo + xo) * ikk;
      for (int c = 0; c < d.ci; ++c) {
        const T* plane = x + static_cast<int64_t>(c) * d.h * d.w;
        for (int kh = 0; kh < d.kh; ++kh) {
          const int iy = y * d.stride + kh - d.pad;
          for (int kw = 0; kw < d.kw; ++kw) {
            const int ix = xo * d.stride + kw - d.pad;
            *dst++ = (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                         ? plane[static_cast<int64_t>(iy) * d.w + ix]
                         : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const Conv2dDims& d, T* x) {
  const int64_t ikk = d.patch();
  for (int y = 0; y < d.ho; ++y) {
    for (int xo = 0; xo < d.wo; ++xo) {
      const T* src = col + (static_cast<int64_t>(y) * d.wo + xo) * ikk;
      for (int c = 0; c < d.ci; ++c) {
        T* plane = x + static_cast<int64_t>(c) * d.h * d.w;
        for (int kh = 0; kh < d.kh; ++kh) {
          const int iy = y * d.stride + kh - d.pad;
          for (int kw = 0; kw < d.kw; ++kw) {
            const int ix = xo * d.stride + kw - d.pad;
            const T v = *src++;
            if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w) {
              plane[static_cast<int64_t>(iy) * d.w + ix] += v;
            }
          }
        }
      }
    }
  }
}

// out[n] = w_mat [O,IKK] x col(x[n])^T, laid out [O, positions]
template <typename T>
void conv2d_forward_impl(const T* x, const T* w, T* out, const Conv2dDims& d) {
  const int64_t ikk = d.patch();
  const int64_t pos = d.positions();
  const int64_t x_stride = static_cast<int64_t>(d.ci) * d.h * d.w;
  const int64_t o_stride = static_cast<int64_t>(d.co) * pos;
  parallel_for(d.n, [&](int64_t lo, int64_t hi) {
    std::vector<T> col(static_cast<size_t>(pos * ikk));
    for (int64_t n = lo; n < hi; ++n) {
      im2col(x + n * x_stride, d, col.data());
      detail::gemm_nt(w, col.data(), out + n * o_stride, d.co,
                      static_cast<int>(ikk), static_cast<int>(pos), false);
    }
  });
}

// dx[n] += col2im(g[n]^T x w_mat)
template <typename T>
void conv2d_backward_data_impl(const T* g, const T* w, T* dx,
                               const Conv2dDims& d) {
  const int64_t ikk = d.patch();
  const int64_t pos = d.positions();
  const int64_t x_stride = static_cast<int64_t>(d.ci) * d.h * d.w;
  const int64_t o_stride = static_cast<int64_t>(d.co) * pos;
  parallel_for(d.n, [&](int64_t lo, int64_t hi) {
    std::vector<T> col(static_cast<size_t>(pos * ikk));
    for (int64_t n = lo; n < hi; ++n) {
      detail::gemm_tn(g + n * o_stride, w, col.data(), static_cast<int>(pos),
                      d.co, static_cast<int>(ikk), false);
      col2im(col.data(), d, dx + n * x_stride);
    }
  });
}

// dw_mat [O,IKK] += sum_n g[n] [O,pos] x col(x[n]) [pos,IKK]
template <typename T>
void conv2d_backward_weight_impl(const T* x, const T* g, T* dw,
                                 const Conv2dDims& d) {
  const int64_t ikk = d.patch();
  const int64_t pos = d.positions();
  const int64_t x_stride = static_cast<int64_t>(d.ci) * d.h * d.w;
  const int64_t o_stride = static_cast<int64_t>(d.co) * pos;
  std::vector<T> col(static_cast<size_t>(pos * ikk));
  for (int64_t n = 0; n < d.n; ++n) {
    im2col(x + n * x_stride, d, col.data());
    detail::gemm_nn(g + n * o_stride, col.data(), dw, d.co,
                    static_cast<int>(pos), static_cast<int>(ikk), true);
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_defined(x, "conv2d");
  check_defined(w, "conv2d");
  Conv2dDims d = conv2d_dims(x, w, stride, pad, "conv2d");
  if (x.dim(1) != w.dim(1)) {
    fail("conv2d: channel mismatch, x " + shape_str(x.shape()) + " vs w " +
         shape_str(w.shape()));
  }
  if (x.dtype() != w.dtype()) fail("conv2d: dtype mismatch");
  d.h = static_cast<int>(x.dim(2));
  d.w = static_cast<int>(x.dim(3));
  if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw) {
    fail("conv2d: kernel " + shape_str(w.shape()) +
         " larger than padded input " + shape_str(x.shape()));
  }
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;

  Tensor out = Tensor::zeros({d.n, d.co, d.ho, d.wo}, x.dtype());
  if (x.dtype() == DType::F32) {
    conv2d_forward_impl(x.f32(), w.f32(), out.f32(), d);
  } else {
    conv2d_forward_impl(x.f64(), w.f64(), out.f64(), d);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x, &w})) {
    auto sx = tape->slot_for_input(x);
    auto sw = tape->slot_for_input(w);
    auto so = tape->slot_for_output(out);
    tape->record([sx, sw, so, x, w, d] {
      if (!so->has) return;
      const Tensor& g = so->grad;
      if (sx) {
        Tensor dx = Tensor::zeros(x.shape(), x.dtype());
        if (x.dtype() == DType::F32) {
          conv2d_backward_data_impl(g.f32(), w.f32(), dx.f32(), d);
        } else {
          conv2d_backward_data_impl(g.f64(), w.f64(), dx.f64(), d);
        }
        accumulate_move(sx, std::move(dx));
      }
      if (sw) {
        Tensor dw = Tensor::zeros(w.shape(), w.dtype());
        if (x.dtype() == DType::F32) {
          conv2d_backward_weight_impl(x.f32(), g.f32(), dw.f32(), d);
        } else {
          conv2d_backward_weight_impl(x.f64(), g.f64(), dw.f64(), d);
        }
        accumulate_move(sw, std::move(dw));
      }
    });
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, int stride,
                        int pad) {
  check_defined(x, "conv_transpose2d");
  check_defined(w, "conv_transpose2d");
  Conv2dDims d = conv2d_dims(x, w, stride, pad, "conv_transpose2d");
  if (x.dim(1) != w.dim(0)) {
    fail("conv_transpose2d: channel mismatch, x " + shape_str(x.shape()) +
         " vs w " + shape_str(w.shape()));
  }
  if (x.dtype() != w.dtype()) fail("conv_transpose2d: dtype mismatch");
  d.ho = static_cast<int>(x.dim(2));
  d.wo = static_cast<int>(x.dim(3));
  d.h = (d.ho - 1) * stride + d.kh - 2 * pad;
  d.w = (d.wo - 1) * stride + d.kw - 2 * pad;
  if (d.h < 1 || d.w < 1) {
    fail("conv_transpose2d: output extent would be empty for input " +
         shape_str(x.shape()));
  }

  Tensor out = Tensor::zeros({d.n, d.ci, d.h, d.w}, x.dtype());
  if (x.dtype() == DType::F32) {
    conv2d_backward_data_impl(x.f32(), w.f32(), out.f32(), d);
  } else {
    conv2d_backward_data_impl(x.f64(), w.f64(), out.f64(), d);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x, &w})) {
    auto sx = tape->slot_for_input(x);
    auto sw = tape->slot_for_input(w);
    auto so = tape->slot_for_output(out);
    tape->record([sx, sw, so, x, w, d] {
      if (!so->has) return;
      const Tensor& g = so->grad;  // shaped like the conv2d "input" side
      if (sx) {
        Tensor dx = Tensor::zeros(x.shape(), x.dtype());
        if (x.dtype() == DType::F32) {
          conv2d_forward_impl(g.f32(), w.f32(), dx.f32(), d);
        } else {
          conv2d_forward_impl(g.f64(), w.f64(), dx.f64(), d);
        }
        accumulate_move(sx, std::move(dx));
      }
      if (sw) {
        Tensor dw = Tensor::zeros(w.shape(), w.dtype());
        if (x.dtype() == DType::F32) {
          conv2d_backward_weight_impl(g.f32(), x.f32(), dw.f32(), d);
        } else {
          conv2d_backward_weight_impl(g.f64(), x.f64(), dw.f64(), d);
        }
        accumulate_move(sw, std::move(dw));
      }
    });
  }
  return out;
}

namespace {

struct Conv3dDims {
  int n, ci, t, h, w;
  int co, kt, kh, kw;
  int st, sh, sw;
  int pt, ph, pw;
  int to, ho, wo;
  int64_t patch() const { return static_cast<int64_t>(ci) * kt * kh * kw; }
  int64_t positions() const { return static_cast<int64_t>(to) * ho * wo; }
};

template <typename T>
void vol2col(const T* x, const Conv3dDims& d, T* col) {
  T* dst = col;
  for (int tz = 0; tz < d.to; ++tz) {
    for (int y = 0; y < d.ho; ++y) {
      for (int xo = 0; xo < d.wo; ++xo) {
        for (int c = 0; c < d.ci; ++c) {
          const T* vol = x + static_cast<int64_t>(c) * d.t * d.h * d.w;
          for (int kt = 0; kt < d.kt; ++kt) {
            const int it = tz * d.st + kt - d.pt;
            for (int kh = 0; kh < d.kh; ++kh) {
              const int iy = y * d.sh + kh - d.ph;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int ix = xo * d.sw + kw - d.pw;
                const bool in = it >= 0 && it < d.t && iy >= 0 && iy < d.h &&
                                ix >= 0 && ix < d.w;
                *dst++ = in ? vol[(static_cast<int64_t>(it) * d.h + iy) * d.w +
                                  ix]
                            : T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2vol(const T* col, const Conv3dDims& d, T* x) {
  const T* src = col;
  for (int tz = 0; tz < d.to; ++tz) {
    for (int y = 0; y < d.ho; ++y) {
      for (int xo = 0; xo < d.wo; ++xo) {
        for (int c = 0; c < d.ci; ++c) {
          T* vol = x + static_cast<int64_t>(c) * d.t * d.h * d.w;
          for (int kt = 0; kt < d.kt; ++kt) {
            const int it = tz * d.st + kt - d.pt;
            for (int kh = 0; kh < d.kh; ++kh) {
              const int iy = y * d.sh + kh - d.ph;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int ix = xo * d.sw + kw - d.pw;
                const T v = *src++;
                if (it >= 0 && it < d.t && iy >= 0 && iy < d.h && ix >= 0 &&
                    ix < d.w) {
                  vol[(static_cast<int64_t>(it) * d.h + iy) * d.w + ix] += v;
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_forward_impl(const T* x, const T* w, T* out, const Conv3dDims& d) {
  const int64_t ikk = d.patch();
  const int64_t pos = d.positions();
  const int64_t x_stride = static_cast<int64_t>(d.ci) * d.t * d.h * d.w;
  const int64_t o_stride = static_cast<int64_t>(d.co) * pos;
  parallel_for(d.n, [&](int64_t lo, int64_t hi) {
    std::vector<T> col(static_cast<size_t>(pos * ikk));
    for (int64_t n = lo; n < hi; ++n) {
      vol2col(x + n * x_stride, d, col.data());
      detail::gemm_nt(w, col.data(), out + n * o_stride, d.co,
                      static_cast<int>(ikk), static_cast<int>(pos), false);
    }
  });
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const int stride[3],
              const int pad[3]) {
  check_defined(x, "conv3d");
  check_defined(w, "conv3d");
  if (x.rank() != 5 || w.rank() != 5) {
    fail("conv3d: expects x [N,C,T,H,W] and w [O,I,Kt,Kh,Kw], got " +
         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) fail("conv3d: channel mismatch");
  if (x.dtype() != w.dtype()) fail("conv3d: dtype mismatch");
  Conv3dDims d;
  d.n = static_cast<int>(x.dim(0));
  d.ci = static_cast<int>(x.dim(1));
  d.t = static_cast<int>(x.dim(2));
  d.h = static_cast<int>(x.dim(3));
  d.w = static_cast<int>(x.dim(4));
  d.co = static_cast<int>(w.dim(0));
  d.kt = static_cast<int>(w.dim(2));
  d.kh = static_cast<int>(w.dim(3));
  d.kw = static_cast<int>(w.dim(4));
  d.st = stride[0];
  d.sh = stride[1];
  d.sw = stride[2];
  d.pt = pad[0];
  d.ph = pad[1];
  d.pw = pad[2];
  if (d.st < 1 || d.sh < 1 || d.sw < 1) fail("conv3d: stride must be >= 1");
  if (d.t + 2 * d.pt < d.kt || d.h + 2 * d.ph < d.kh || d.w + 2 * d.pw < d.kw) {
    fail("conv3d: kernel larger than padded input");
  }
  d.to = (d.t + 2 * d.pt - d.kt) / d.st + 1;
  d.ho = (d.h + 2 * d.ph - d.kh) / d.sh + 1;
  d.wo = (d.w + 2 * d.pw - d.kw) / d.sw + 1;

  Tensor out = Tensor::zeros({d.n, d.co, d.to, d.ho, d.wo}, x.dtype());
  if (x.dtype() == DType::F32) {
    conv3d_forward_impl(x.f32(), w.f32(), out.f32(), d);
  } else {
    conv3d_forward_impl(x.f64(), w.f64(), out.f64(), d);
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x, &w})) {
    auto sx = tape->slot_for_input(x);
    auto sw = tape->slot_for_input(w);
    auto so = tape->slot_for_output(out);
    tape->record([sx, sw, so, x, w, d] {
      if (!so->has) return;
      const Tensor& g = so->grad;
      const int64_t ikk = d.patch();
      const int64_t pos = d.positions();
      const int64_t x_stride = static_cast<int64_t>(d.ci) * d.t * d.h * d.w;
      const int64_t o_stride = static_cast<int64_t>(d.co) * pos;
      auto run = [&](auto tag) {
        using T = decltype(tag);
        if (sx) {
          Tensor dx = Tensor::zeros(x.shape(), x.dtype());
          parallel_for(d.n, [&](int64_t lo, int64_t hi) {
            std::vector<T> col(static_cast<size_t>(pos * ikk));
            for (int64_t n = lo; n < hi; ++n) {
              detail::gemm_tn(g.data<T>() + n * o_stride, w.data<T>(),
                              col.data(), static_cast<int>(pos), d.co,
                              static_cast<int>(ikk), false);
              col2vol(col.data(), d, dx.data<T>() + n * x_stride);
            }
          });
          accumulate_move(sx, std::move(dx));
        }
        if (sw) {
          Tensor dw = Tensor::zeros(w.shape(), w.dtype());
          std::vector<T> col(static_cast<size_t>(pos * ikk));
          for (int64_t n = 0; n < d.n; ++n) {
            vol2col(x.data<T>() + n * x_stride, d, col.data());
            detail::gemm_nn(g.data<T>() + n * o_stride, col.data(),
                            dw.data<T>(), d.co, static_cast<int>(pos),
                            static_cast<int>(ikk), true);
          }
          accumulate_move(sw, std::move(dw));
        }
      };
      if (x.dtype() == DType::F32) {
        run(float{});
      } else {
        run(double{});
      }
    });
  }
  return out;
}

}  // namespace teco::nn
