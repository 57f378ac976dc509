#pragma once

// Shared test helpers: random tensors and a finite-difference gradient
// checker (float64, central differences).

#include <cmath>
#include <functional>
#include <vector>

#include "teco/ops.hpp"
#include "teco/rng.hpp"
#include "teco/tape.hpp"
#include "teco/tensor.hpp"

namespace teco::testutil {

inline nn::Tensor rand_tensor(nn::Shape shape, Rng& rng, double scale = 1.0,
                              nn::DType dt = nn::DType::F64) {
  return nn::Tensor::randn(std::move(shape), rng, scale, dt);
}

inline double rel_err(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  if (denom < 1e-7) return std::abs(a - b) < 1e-7 ? 0.0 : 1.0;
  return std::abs(a - b) / denom;
}

struct GradcheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

// loss_fn must rebuild the graph from the current parameter values each
// call. Checks `coords` random coordinates of every parameter against
// central differences with h = 1e-5.
inline GradcheckResult gradcheck(const std::function<nn::Tensor()>& loss_fn,
                                 std::vector<nn::Tensor> params, Rng& rng,
                                 int coords = 20, double h = 1e-5) {
  using nn::Tensor;
  GradcheckResult res;
  std::vector<Tensor> analytic;
  {
    nn::Tape tape;
    for (auto& p : params) p.set_requires_grad(true);
    Tensor loss = loss_fn();
    tape.backward(loss);
    for (auto& p : params) {
      Tensor g = tape.grad(p);
      analytic.push_back(g.defined() ? g.clone()
                                     : Tensor::zeros(p.shape(), p.dtype()));
    }
  }
  auto eval = [&]() -> double {
    nn::NoGrad guard;
    return loss_fn().at(0);
  };
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const int64_t n = p.numel();
    for (int c = 0; c < coords; ++c) {
      const int64_t idx = static_cast<int64_t>(rng.next_below(
          static_cast<uint64_t>(n)));
      const double orig = p.at(idx);
      p.set(idx, orig + h);
      const double up = eval();
      p.set(idx, orig - h);
      const double down = eval();
      p.set(idx, orig);
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi].at(idx);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(a, numeric));
      ++res.checked;
    }
  }
  return res;
}

}  // namespace teco::testutil
