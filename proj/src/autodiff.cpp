#include "sargan/autodiff.hpp"

#include "sargan/errors.hpp"

namespace sargan {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor::zeros_like(value);
  } else {
    grad.fill(0.0);
  }
}

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  Node node;
  node.borrowed = &p.value;
  node.requires_grad = true;
  node.sink = &p;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::frozen(const Parameter& p) {
  Node node;
  node.borrowed = &p.value;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ShapeError("op inputs live on a different tape");
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.owned;
}

Tensor* Tape::grad_target(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.shape() != value(id).shape()) n.grad = Tensor::zeros_like(value(id));
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ShapeError("loss lives on a different tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     shape_str(loss.shape()));
  }
  for (Node& n : nodes_) {
    if (n.sink && n.sink->grad.shape() != n.sink->value.shape()) n.sink->zero_grad();
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad_target(loss.id())->fill(1.0);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.shape() != value(i).shape()) continue;
    if (n.sink) {
      n.sink->grad += n.grad;
    } else if (n.backward) {
      // Callbacks only touch existing nodes, so `n` stays valid.
      n.backward(*this, n.grad);
    }
  }
}

Var detach(Var v) { return v.tape().constant(v.value()); }

}  // namespace sargan
