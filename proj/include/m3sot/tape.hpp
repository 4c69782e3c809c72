#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "m3sot/tensor.hpp"

namespace m3sot {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t numel() const { return value().numel(); }
  /// Value of a single-element Var.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Eager reverse-mode recorder. Operations append nodes in execution order,
/// so the node list is already topologically sorted; backward walks it in
/// reverse. A Tape is single-owner and not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Var& out)>;

  Tape() = default;
  /// With record_grad false nothing is differentiable (inference mode).
  explicit Tape(bool record_grad) : record_grad_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a reference to an external tensor (typically a parameter).
  /// The tensor must outlive the tape and stay unmodified while recorded.
  /// backward() accumulates into its grad buffer when requires_grad is set.
  Var leaf(Tensor& t);
  /// Records a value that never receives gradients.
  Var constant(Tensor t);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(const Var& v) const;
  bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }
  /// Gradient buffer for v during backward; empty when v needs no gradient.
  std::span<double> grad(const Var& v);
  /// Gradient of v left by the last backward() (empty if none reached it).
  std::span<const double> grad_of(const Var& v) const { return nodes_[v.id()].grad; }

  /// Propagates d loss / d node to every node, then adds each leaf's
  /// gradient into its tensor. Leaf tensors are never zeroed here.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

  /// Piecewise ops (relu, max, clamps, argmax picks) fold their branch
  /// choices in here; equal signatures mean the same smooth piece.
  void note_branch(std::uint64_t v) { branches_ = (branches_ ^ v) * 0x100000001b3ULL; }
  std::uint64_t branch_signature() const { return branches_; }

 private:
  struct Node {
    Tensor owned;
    Tensor* leaf = nullptr;
    std::vector<double> grad;
    BackwardFn fn;
    bool needs_grad = false;
  };
  Var push(Node node);

  std::deque<Node> nodes_;
  bool record_grad_ = true;
  std::uint64_t branches_ = 0xcbf29ce484222325ULL;
};

}  // namespace m3sot
