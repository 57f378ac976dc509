#include "teco/tensor.hpp"

namespace teco::nn {

namespace {

std::shared_ptr<Storage> make_storage(int64_t n, DType dt) {
  auto st = std::make_shared<Storage>();
  if (dt == DType::F32) {
    st->data = std::vector<float>(static_cast<size_t>(n), 0.f);
  } else {
    st->data = std::vector<double>(static_cast<size_t>(n), 0.0);
  }
  return st;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype) {
  const int64_t n = shape_numel(shape);
  if (n < 0) fail("zeros: negative extent in shape " + shape_str(shape));
  return Tensor(make_storage(n, dtype), std::move(shape), dtype);
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  const int64_t n = t.numel();
  if (dtype == DType::F32) {
    float* p = t.f32();
    for (int64_t i = 0; i < n; ++i) p[i] = static_cast<float>(value);
  } else {
    double* p = t.f64();
    for (int64_t i = 0; i < n; ++i) p[i] = value;
  }
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) {
  return full({1}, value, dtype);
}

Tensor Tensor::from_floats(Shape shape, const std::vector<float>& v) {
  if (shape_numel(shape) != static_cast<int64_t>(v.size())) {
    fail("from_floats: " + std::to_string(v.size()) +
         " values do not fill shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), DType::F32);
  std::copy(v.begin(), v.end(), t.f32());
  return t;
}

Tensor Tensor::from_doubles(Shape shape, const std::vector<double>& v) {
  if (shape_numel(shape) != static_cast<int64_t>(v.size())) {
    fail("from_doubles: " + std::to_string(v.size()) +
         " values do not fill shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), DType::F64);
  std::copy(v.begin(), v.end(), t.f64());
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  const int64_t n = t.numel();
  if (dtype == DType::F32) {
    float* p = t.f32();
    for (int64_t i = 0; i < n; ++i) {
      p[i] = static_cast<float>(rng.next_normal() * stddev);
    }
  } else {
    double* p = t.f64();
    for (int64_t i = 0; i < n; ++i) p[i] = rng.next_normal() * stddev;
  }
  return t;
}

double Tensor::at(int64_t i) const {
  if (!defined() || i < 0 || i >= numel()) fail("Tensor::at: index out of range");
  return dtype_ == DType::F32 ? static_cast<double>(f32()[i]) : f64()[i];
}

void Tensor::set(int64_t i, double v) {
  if (!defined() || i < 0 || i >= numel()) fail("Tensor::set: index out of range");
  if (dtype_ == DType::F32) {
    f32()[i] = static_cast<float>(v);
  } else {
    f64()[i] = v;
  }
}

Tensor Tensor::clone() const {
  if (!defined()) return Tensor();
  Tensor t = zeros(shape_, dtype_);
  if (dtype_ == DType::F32) {
    std::copy(f32(), f32() + numel(), t.f32());
  } else {
    std::copy(f64(), f64() + numel(), t.f64());
  }
  return t;
}

Tensor Tensor::astype(DType dt) const {
  if (dt == dtype_) return clone();
  Tensor t = zeros(shape_, dt);
  const int64_t n = numel();
  for (int64_t i = 0; i < n; ++i) t.set(i, at(i));
  return t;
}

Tensor Tensor::reshaped_view(Shape s) const {
  if (shape_numel(s) != numel()) {
    fail("reshaped_view: " + shape_str(s) + " does not match numel of " +
         shape_str(shape_));
  }
  Tensor t = *this;
  t.shape_ = std::move(s);
  return t;
}

}  // namespace teco::nn
