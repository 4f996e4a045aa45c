#pragma once

#include <functional>
#include <vector>

#include "ggpfn/errors.hpp"
#include "ggpfn/tensor.hpp"

namespace ggpfn {

// Reverse-mode autodiff tape. Ops append themselves in execution order, which
// is already a topological order, and backward() replays the pull closures
// exactly once in reverse. A tape is single-use: forward, backward, read
// gradients, discard.
template <class S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf tensor whose gradient should be accumulated.
  Tensor<S> watch(const Tensor<S>& t) {
    Tensor<S> out = t.detached();
    adopt(out);
    return out;
  }

  void backward(const Tensor<S>& loss) {
    if (!loss.tracked())
      throw Error("backward: tensor is detached from any tape");
    if (loss.tape() != this)
      throw Error("backward: tensor belongs to a different tape");
    if (loss.size() != 1) throw Error("backward: loss must be a scalar");
    if (replayed_) throw Error("backward: tape already replayed");
    replayed_ = true;
    grads_[std::size_t(loss.node())][0] = S(1);
    for (std::size_t i = pulls_.size(); i-- > 0;) pulls_[i]();
  }

  // Gradient of a tracked tensor, same shape, after backward().
  Tensor<S> grad(const Tensor<S>& t) const {
    if (!t.tracked() || t.tape() != this)
      throw Error("grad: tensor is not attached to this tape");
    return Tensor<S>::from(t.shape(), grads_[std::size_t(t.node())]);
  }

  // --- used by the op implementations ---

  // Gives `out` a fresh node with a zeroed gradient buffer.
  void adopt(Tensor<S>& out) {
    out.tape_ = this;
    out.node_ = int(grads_.size());
    grads_.emplace_back(out.size(), S(0));
  }

  void record(std::function<void()> pull) { pulls_.push_back(std::move(pull)); }

  std::vector<S>& g(int node) { return grads_[std::size_t(node)]; }

 private:
  std::vector<std::vector<S>> grads_;
  std::vector<std::function<void()>> pulls_;
  bool replayed_ = false;
};

// The common tape of a set of op inputs: null when all are detached, and a
// single tape otherwise. Mixing tapes is a usage error.
template <class S>
inline Tape<S>* common_tape(std::initializer_list<const Tensor<S>*> inputs) {
  Tape<S>* tape = nullptr;
  for (const Tensor<S>* t : inputs) {
    if (!t->tracked()) continue;
    if (tape && t->tape() != tape)
      throw Error("op inputs belong to different tapes");
    tape = t->tape();
  }
  return tape;
}

}  // namespace ggpfn
