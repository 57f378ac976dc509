#pragma once

// Adam with linear warmup into a cosine decay. The schedule is a pure
// function of the step counter so training runs can resume bit-exactly.

#include <cstdint>
#include <vector>

#include "teco/tensor.hpp"

namespace teco::nn {

struct AdamConfig {
  double base_lr = 1e-3;
  int64_t warmup_steps = 0;
  int64_t total_steps = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// base * min(step/warmup, 1), then cosine decay to 0 over the remaining
// steps once warmup has finished (factor 1 exactly at step == warmup).
double effective_lr(const AdamConfig& cfg, int64_t step);

class AdamState {
 public:
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  // In-place update of params from grads (same order every call). A grad
  // may be an undefined Tensor, meaning zero. Must not run under a tape.
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }
  const AdamConfig& config() const { return cfg_; }
  double current_lr() const { return effective_lr(cfg_, step_); }

  // Moment accumulators, index-aligned with the param list (empty until the
  // first step). Exposed for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace teco::nn
