#include "teco/optim.hpp"

#include <cmath>
#include <numbers>

#include "teco/detail/kernels_ref.hpp"
#include "teco/kernels.hpp"
#include "teco/tape.hpp"

namespace teco::nn {

double effective_lr(const AdamConfig& cfg, int64_t step) {
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    return cfg.base_lr * static_cast<double>(step) /
           static_cast<double>(cfg.warmup_steps);
  }
  const int64_t decay_span = cfg.total_steps - cfg.warmup_steps;
  if (decay_span <= 0) return cfg.base_lr;
  const double progress =
      static_cast<double>(step - cfg.warmup_steps) /
      static_cast<double>(decay_span);
  return cfg.base_lr * 0.5 *
         (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

void AdamState::step(std::vector<Tensor>& params,
                     const std::vector<Tensor>& grads) {
  if (Tape::active()) fail("adam_step: must not run under an active tape");
  if (params.size() != grads.size()) {
    fail("adam_step: " + std::to_string(params.size()) + " params vs " +
         std::to_string(grads.size()) + " grads");
  }
  if (m_.empty()) {
    for (const Tensor& p : params) {
      m_.push_back(Tensor::zeros(p.shape(), p.dtype()));
      v_.push_back(Tensor::zeros(p.shape(), p.dtype()));
    }
  }
  if (m_.size() != params.size()) {
    fail("adam_step: parameter count changed mid-run");
  }
  const double lr = effective_lr(cfg_, step_);
  const int64_t t = step_ + 1;
  const double bc1 = 1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t)));
  const double bc2 = 1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t)));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (m_[i].shape() != p.shape()) {
      fail("adam_step: moment/param shape mismatch at index " +
           std::to_string(i));
    }
    Tensor g = grads[i];
    if (g.defined() && g.shape() != p.shape()) {
      fail("adam_step: grad shape " + shape_str(g.shape()) +
           " does not match param " + shape_str(p.shape()));
    }
    if (!g.defined()) g = Tensor::zeros(p.shape(), p.dtype());
    const int64_t n = p.numel();
    if (p.dtype() == DType::F32) {
      kern::active().adam_update(
          p.f32(), m_[i].f32(), v_[i].f32(), g.f32(), n,
          static_cast<float>(cfg_.beta1), static_cast<float>(cfg_.beta2),
          static_cast<float>(lr), static_cast<float>(cfg_.eps),
          static_cast<float>(bc1), static_cast<float>(bc2));
    } else {
      kern::ref::adam_update(p.f64(), m_[i].f64(), v_[i].f64(), g.f64(), n,
                             cfg_.beta1, cfg_.beta2, lr, cfg_.eps, bc1, bc2);
    }
  }
  ++step_;
}

}  // namespace teco::nn
