#pragma once

// Reverse-mode tape. Operations executed while a Tape is alive append a
// backward closure in execution order; Tape::backward replays them once in
// reverse, which is a reverse topological order of the recorded graph.
// Gradients accumulate into per-storage slots, so querying a parameter's
// gradient goes through the tensor handle itself.
//
// One tape per thread at a time. Forward/backward are pure with respect to
// their inputs, so disjoint tapes on different threads don't interact.

#include <functional>
#include <vector>

#include "teco/tensor.hpp"

namespace teco::nn {

class Tape;

struct GradSlot {
  Tensor grad;   // allocated on first accumulation
  bool has = false;
  uint64_t owner = 0;  // Tape::id(); tapes are never compared by address
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // True when an op with these inputs must be recorded.
  bool wants(std::initializer_list<const Tensor*> inputs) const;

  // Slot for an input (creating one for requires_grad leaves); nullptr when
  // the tensor does not participate in this tape's gradient flow.
  std::shared_ptr<GradSlot> slot_for_input(const Tensor& t);
  // Fresh slot for an op output.
  std::shared_ptr<GradSlot> slot_for_output(const Tensor& t);

  void record(std::function<void()> backward);
  size_t size() const { return ops_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape. The loss must be a
  // scalar recorded on this tape. A tape replays at most once.
  void backward(const Tensor& loss);

  // Gradient accumulated for t on this tape; undefined Tensor when none.
  Tensor grad(const Tensor& t) const;

  uint64_t id() const { return id_; }

 private:
  std::vector<std::function<void()>> ops_;
  bool replayed_ = false;
  Tape* prev_ = nullptr;
  uint64_t id_;
};

// Scoped "no gradient" region: ops run without recording even if a tape is
// active (used by samplers, evaluation, and the backward pass itself).
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool prev_;
};

// Accumulate g into slot (no-op when slot is null).
void accumulate_grad(const std::shared_ptr<GradSlot>& slot, const Tensor& g);

// Convenience free function matching the substrate's contract.
inline void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (!t) fail("backward: no active tape");
  t->backward(loss);
}

}  // namespace teco::nn
