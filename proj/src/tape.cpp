#include "teco/tape.hpp"

#include <atomic>

#include "teco/kernels.hpp"

namespace teco::nn {

namespace {
thread_local Tape* g_active = nullptr;
thread_local bool g_no_grad = false;
std::atomic<uint64_t> g_next_tape_id{1};
}  // namespace

Tape::Tape() : prev_(g_active), id_(g_next_tape_id.fetch_add(1)) {
  g_active = this;
}

Tape::~Tape() { g_active = prev_; }

Tape* Tape::active() { return g_no_grad ? nullptr : g_active; }

bool Tape::wants(std::initializer_list<const Tensor*> inputs) const {
  for (const Tensor* t : inputs) {
    if (!t->defined()) continue;
    if (t->requires_grad()) return true;
    const auto& slot = t->storage()->slot;
    if (slot && slot->owner == id_) return true;
  }
  return false;
}

std::shared_ptr<GradSlot> Tape::slot_for_input(const Tensor& t) {
  if (!t.defined()) return nullptr;
  auto& slot = t.storage()->slot;
  if (slot && slot->owner == id_) return slot;
  if (t.requires_grad()) {
    slot = std::make_shared<GradSlot>();
    slot->owner = id_;
    return slot;
  }
  return nullptr;
}

std::shared_ptr<GradSlot> Tape::slot_for_output(const Tensor& t) {
  auto& slot = t.storage()->slot;
  slot = std::make_shared<GradSlot>();
  slot->owner = id_;
  return slot;
}

void Tape::record(std::function<void()> backward) {
  ops_.push_back(std::move(backward));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    fail("backward: loss must be a scalar, got shape " +
         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  const auto& slot = loss.storage()->slot;
  if (!slot || slot->owner != id_) {
    fail("backward: loss was not recorded on the active tape");
  }
  if (replayed_) fail("backward: tape already replayed");
  replayed_ = true;

  slot->grad = Tensor::full(loss.shape(), 1.0, loss.dtype());
  slot->has = true;

  NoGrad guard;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

Tensor Tape::grad(const Tensor& t) const {
  if (!t.defined()) return Tensor();
  const auto& slot = t.storage()->slot;
  if (!slot || slot->owner != id_ || !slot->has) return Tensor();
  return slot->grad;
}

NoGrad::NoGrad() : prev_(g_no_grad) { g_no_grad = true; }
NoGrad::~NoGrad() { g_no_grad = prev_; }

void accumulate_grad(const std::shared_ptr<GradSlot>& slot, const Tensor& g) {
  if (!slot) return;
  if (!slot->has) {
    slot->grad = g.clone();
    slot->has = true;
    return;
  }
  Tensor& dst = slot->grad;
  if (dst.shape() != g.shape() || dst.dtype() != g.dtype()) {
    fail("gradient accumulation shape mismatch: " + shape_str(dst.shape()) +
         " vs " + shape_str(g.shape()));
  }
  const int64_t n = dst.numel();
  if (dst.dtype() == DType::F32) {
    kern::active().vadd(dst.f32(), g.f32(), dst.f32(), n);
  } else {
    for (int64_t i = 0; i < n; ++i) dst.f64()[i] += g.f64()[i];
  }
}

}  // namespace teco::nn
