#pragma once

// Dense row-major tensors with float32/float64 storage. A Tensor is a cheap
// handle: copies alias the same buffer (parameters need a stable identity
// across training steps); clone() makes a deep copy. Gradient bookkeeping
// hangs off the shared storage, see tape.hpp.

#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "teco/rng.hpp"

namespace teco::nn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

enum class DType : uint8_t { F32, F64 };

inline const char* dtype_name(DType d) {
  return d == DType::F32 ? "float32" : "float64";
}

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

struct GradSlot;

struct Storage {
  std::variant<std::vector<float>, std::vector<double>> data;
  std::shared_ptr<GradSlot> slot;  // managed by the active tape
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::F32);
  static Tensor full(Shape shape, double value, DType dtype = DType::F32);
  static Tensor scalar(double value, DType dtype = DType::F32);
  static Tensor from_floats(Shape shape, const std::vector<float>& v);
  static Tensor from_doubles(Shape shape, const std::vector<double>& v);
  // Gaussian init, values drawn in row-major order.
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      DType dtype = DType::F32);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return shape_numel(shape_); }
  DType dtype() const { return dtype_; }
  bool is_scalar() const { return defined() && numel() == 1; }

  template <typename T>
  T* data() {
    return std::get<std::vector<T>>(storage_->data).data();
  }
  template <typename T>
  const T* data() const {
    return std::get<std::vector<T>>(storage_->data).data();
  }
  float* f32() { return data<float>(); }
  const float* f32() const { return data<float>(); }
  double* f64() { return data<double>(); }
  const double* f64() const { return data<double>(); }

  // dtype-agnostic element access; slow, for tests and glue code.
  double at(int64_t i) const;
  void set(int64_t i, double v);

  Tensor clone() const;            // deep copy, never tracked
  Tensor astype(DType dt) const;   // deep copy with cast
  Tensor reshaped_view(Shape s) const;  // same storage, new extents

  Tensor& set_requires_grad(bool b) {
    if (!defined()) fail("set_requires_grad on undefined tensor");
    storage_->requires_grad = b;
    return *this;
  }
  bool requires_grad() const { return defined() && storage_->requires_grad; }

  // Stable identity of the underlying buffer.
  const void* id() const { return storage_.get(); }
  const std::shared_ptr<Storage>& storage() const { return storage_; }

 private:
  Tensor(std::shared_ptr<Storage> st, Shape shape, DType dt)
      : storage_(std::move(st)), shape_(std::move(shape)), dtype_(dt) {}

  std::shared_ptr<Storage> storage_;
  Shape shape_;
  DType dtype_ = DType::F32;
};

}  // namespace teco::nn
