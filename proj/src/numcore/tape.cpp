#include "m3sot/tape.hpp"

#include <algorithm>

#include "m3sot/errors.hpp"

namespace m3sot {

const Tensor& Var::value() const { return tape_->value(*this); }

double Var::item() const {
  const Tensor& t = value();
  if (t.numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(t.shape()));
  return t[0];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor& t) {
  Node n;
  n.leaf = &t;
  n.needs_grad = record_grad_ && t.requires_grad();
  return push(std::move(n));
}

Var Tape::constant(Tensor t) {
  Node n;
  n.owned = std::move(t);
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ContractError("operation mixes values from different tapes");
    n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  }
  if (n.needs_grad) n.fn = std::move(fn);
  return push(std::move(n));
}

const Tensor& Tape::value(const Var& v) const {
  const Node& n = nodes_[v.id()];
  return n.leaf ? *n.leaf : n.owned;
}

std::span<double> Tape::grad(const Var& v) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return {};
  if (n.grad.empty()) n.grad.assign(value(v).numel(), 0.0);
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (value(loss).numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(value(loss).shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id()].needs_grad) return;
  grad(loss)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty() || !n.fn) continue;
    n.fn(*this, Var(this, i));
  }
  for (Node& n : nodes_) {
    if (n.leaf && n.needs_grad && !n.grad.empty()) {
      auto g = n.leaf->ensure_grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.grad[j];
    }
  }
}

}  // namespace m3sot
