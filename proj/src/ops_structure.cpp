#include <algorithm>
#include <cstring>

#include "ops_common.hpp"
#include "teco/ops.hpp"

namespace teco::nn {

using detail::accumulate_move;
using detail::check_defined;

namespace {

int64_t byte_width(DType dt) { return dt == DType::F32 ? 4 : 8; }

const char* raw(const Tensor& t) {
  return t.dtype() == DType::F32 ? reinterpret_cast<const char*>(t.f32())
                                 : reinterpret_cast<const char*>(t.f64());
}

char* raw(Tensor& t) {
  return t.dtype() == DType::F32 ? reinterpret_cast<char*>(t.f32())
                                 : reinterpret_cast<char*>(t.f64());
}

// Copies a [outer, len, inner] block out of a [outer, full, inner] tensor
// (or back, when scatter=true, accumulating is unnecessary for slices of
// distinct outputs so plain writes suffice).
void copy_block(const Tensor& src, Tensor& dst, int64_t outer, int64_t inner,
                int64_t src_axis_len, int64_t dst_axis_len, int64_t src_start,
                int64_t dst_start, int64_t len) {
  const int64_t w = byte_width(src.dtype());
  const char* s = raw(src);
  char* d = raw(dst);
  const int64_t src_row = src_axis_len * inner * w;
  const int64_t dst_row = dst_axis_len * inner * w;
  const int64_t chunk = len * inner * w;
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(d + o * dst_row + dst_start * inner * w,
                s + o * src_row + src_start * inner * w,
                static_cast<size_t>(chunk));
  }
}

void axis_split(const Shape& shape, int axis, int64_t* outer, int64_t* inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= shape[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) {
    *inner *= shape[i];
  }
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  check_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    fail("reshape: " + shape_str(shape) + " does not match numel of " +
         shape_str(x.shape()));
  }
  Tensor out = x.clone().reshaped_view(shape);
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    Shape xshape = x.shape();
    tape->record([sx, so, xshape] {
      if (!so->has) return;
      accumulate_move(sx, so->grad.clone().reshaped_view(xshape));
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  check_defined(x, "permute");
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) fail("permute: rank mismatch");
  std::vector<bool> seen(static_cast<size_t>(r), false);
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int p = perm[static_cast<size_t>(i)];
    if (p < 0 || p >= r || seen[static_cast<size_t>(p)]) {
      fail("permute: invalid permutation");
    }
    seen[static_cast<size_t>(p)] = true;
    out_shape[static_cast<size_t>(i)] = x.dim(p);
  }
  std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    in_strides[static_cast<size_t>(i)] =
        in_strides[static_cast<size_t>(i + 1)] * x.dim(i + 1);
  }
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  const int64_t n = x.numel();
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  for (int64_t o = 0; o < n; ++o) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i) {
      src += idx[static_cast<size_t>(i)] *
             in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    }
    if (x.dtype() == DType::F32) {
      out.f32()[o] = x.f32()[src];
    } else {
      out.f64()[o] = x.f64()[src];
    }
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) {
        break;
      }
      idx[static_cast<size_t>(i)] = 0;
    }
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    std::vector<int> inverse(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
      inverse[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
    }
    tape->record([sx, so, inverse] {
      if (!so->has) return;
      NoGrad guard;
      accumulate_move(sx, permute(so->grad, inverse));
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail("concat: no inputs");
  const Tensor& first = parts.front();
  check_defined(first, "concat");
  const int r = first.rank();
  if (axis < 0 || axis >= r) fail("concat: axis out of range");
  Shape out_shape = first.shape();
  int64_t total_axis = 0;
  for (const Tensor& p : parts) {
    check_defined(p, "concat");
    if (p.rank() != r || p.dtype() != first.dtype()) {
      fail("concat: incompatible inputs");
    }
    for (int i = 0; i < r; ++i) {
      if (i != axis && p.dim(i) != first.dim(i)) {
        fail("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
             shape_str(first.shape()) + " on non-concat axis");
      }
    }
    total_axis += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total_axis;
  Tensor out = Tensor::zeros(out_shape, first.dtype());
  int64_t outer, inner;
  axis_split(out_shape, axis, &outer, &inner);
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    copy_block(p, out, outer, inner, p.dim(axis), total_axis, 0, offset,
               p.dim(axis));
    offset += p.dim(axis);
  }
  Tape* tape = Tape::active();
  bool wants = false;
  if (tape) {
    for (const Tensor& p : parts) wants = wants || tape->wants({&p});
  }
  if (wants) {
    std::vector<std::shared_ptr<GradSlot>> slots;
    std::vector<int64_t> lens;
    for (const Tensor& p : parts) {
      slots.push_back(tape->slot_for_input(p));
      lens.push_back(p.dim(axis));
    }
    auto so = tape->slot_for_output(out);
    Shape part_shape = first.shape();
    tape->record([slots, lens, so, axis, part_shape]() mutable {
      if (!so->has) return;
      NoGrad guard;
      int64_t off = 0;
      for (size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
          accumulate_move(slots[i],
                          slice(so->grad, axis, off, lens[i]));
        }
        off += lens[i];
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  check_defined(x, "slice");
  if (axis < 0 || axis >= x.rank()) fail("slice: axis out of range");
  if (start < 0 || len < 0 || start + len > x.dim(axis)) {
    fail("slice: range [" + std::to_string(start) + "," +
         std::to_string(start + len) + ") exceeds axis extent " +
         std::to_string(x.dim(axis)));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  int64_t outer, inner;
  axis_split(x.shape(), axis, &outer, &inner);
  copy_block(x, out, outer, inner, x.dim(axis), len, start, 0, len);
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    Shape xshape = x.shape();
    const int64_t axis_len = x.dim(axis);
    tape->record([sx, so, xshape, axis, start, len, axis_len, outer, inner] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(xshape, so->grad.dtype());
      copy_block(so->grad, dx, outer, inner, len, axis_len, 0, start, len);
      accumulate_move(sx, std::move(dx));
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& indices) {
  check_defined(x, "gather_rows");
  if (x.rank() < 1) fail("gather_rows: rank-0 input");
  const int64_t rows = x.dim(0);
  const int64_t width = x.numel() / std::max<int64_t>(rows, 1);
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= rows) {
      fail("gather_rows: index " + std::to_string(idx) +
           " out of range [0," + std::to_string(rows) + ")");
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<int64_t>(indices.size());
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  const int64_t w = byte_width(x.dtype());
  for (size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(raw(out) + static_cast<int64_t>(i) * width * w,
                raw(x) + indices[i] * width * w,
                static_cast<size_t>(width * w));
  }
  if (Tape* tape = Tape::active(); tape && tape->wants({&x})) {
    auto sx = tape->slot_for_input(x);
    auto so = tape->slot_for_output(out);
    Shape xshape = x.shape();
    tape->record([sx, so, xshape, indices, width] {
      if (!so->has) return;
      Tensor dx = Tensor::zeros(xshape, so->grad.dtype());
      for (size_t i = 0; i < indices.size(); ++i) {
        const int64_t dst = indices[i] * width;
        const int64_t src = static_cast<int64_t>(i) * width;
        if (dx.dtype() == DType::F32) {
          kern::active().vadd(dx.f32() + dst, so->grad.f32() + src,
                              dx.f32() + dst, width);
        } else {
          kern::ref::vadd(dx.f64() + dst, so->grad.f64() + src,
                          dx.f64() + dst, width);
        }
      }
      accumulate_move(sx, std::move(dx));
    });
  }
  return out;
}

Tensor stop_gradient(const Tensor& x) {
  check_defined(x, "stop_gradient");
  return x.clone();
}

std::vector<int64_t> argmax_rows(const Tensor& x) {
  if (x.rank() != 2) fail("argmax_rows: expected [N,V]");
  const int64_t n = x.dim(0);
  const int64_t v = x.dim(1);
  std::vector<int64_t> out(static_cast<size_t>(n), 0);
  for (int64_t r = 0; r < n; ++r) {
    int64_t best = 0;
    double best_val = x.at(r * v);
    for (int64_t j = 1; j < v; ++j) {
      const double val = x.at(r * v + j);
      if (val > best_val) {
        best_val = val;
        best = j;
      }
    }
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

}  // namespace teco::nn
