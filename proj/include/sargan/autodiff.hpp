#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "sargan/tensor.hpp"

namespace sargan {

/// A learnable tensor and the gradient accumulated into it by Tape::backward.
struct Parameter {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value

  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)) {}

  void zero_grad();
};

class Tape;

/// Handle to one node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward() is a single reverse sweep. The tape is
/// confined to one thread.
class Tape {
 public:
  // Receives the gradient of the loss with respect to the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is accumulated into p.grad on backward().
  Var parameter(Parameter& p);
  // Leaf that reads p.value without copying and never receives a gradient.
  // p must outlive the tape and stay unmodified while the tape is used.
  Var frozen(const Parameter& p);

  // Appends an op result. `backward` is dropped when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of node `id`, zero-allocated on first access; nullptr when
  // the node does not require a gradient.
  Tensor* grad_target(std::size_t id);

  // Propagates d(loss)/d(node) to every node; throws ShapeError for
  // non-scalar losses. Parameters bound with parameter() but not on any path
  // to the loss end up with a zero (allocated) gradient.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter* sink = nullptr;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;  // deque: references to values stay valid as the tape grows
};

/// Detaches `v` from gradient flow: returns a constant copy on the same tape.
Var detach(Var v);

}  // namespace sargan
