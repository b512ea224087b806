#pragma once

#include "seqpatch/nd/tensor.hpp"

#include <cassert>
#include <functional>
#include <unordered_map>

namespace seqpatch {

template <typename Scalar>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;

  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape; }
  Index size() const { return value().size(); }

 private:
  friend class Tape<Scalar>;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse sweep
/// is a valid topological order. Gradients of leaves are *added* to their sinks,
/// which makes repeated `backward` calls accumulate.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, false, nullptr, {}});
    return {this, nodes_.size() - 1};
  }

  /// Leaf whose adjoint is added into `param.grad`.
  Var<Scalar> leaf(Tensor<Scalar>& param) {
    if (param.grad.size() != param.data.size()) param.zero_grad();
    return leaf(param, param.grad);
  }

  /// Leaf reading `param` in place and adding its adjoint into `sink`.
  /// The same tensor bound twice yields the same node.
  Var<Scalar> leaf(const Tensor<Scalar>& param, Vector<Scalar>& sink) {
    if (auto it = leaves_.find(&param); it != leaves_.end()) return {this, it->second};
    if (sink.size() != param.data.size()) sink = Vector<Scalar>::Zero(param.data.size());
    nodes_.push_back(Node{{}, &param, {}, true, &sink, {}});
    leaves_.emplace(&param, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  /// Leaf treated as a constant (no gradient), read in place.
  Var<Scalar> frozen(const Tensor<Scalar>& param) {
    if (auto it = leaves_.find(&param); it != leaves_.end()) return {this, it->second};
    nodes_.push_back(Node{{}, &param, {}, false, nullptr, {}});
    leaves_.emplace(&param, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  /// Appends an op result. `backward` is skipped when no parent needs a gradient.
  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> parents,
                     BackwardFn backward) {
    bool needs = false;
    for (const auto& p : parents) {
      assert(p.tape() == this);
      needs = needs || nodes_[p.id()].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), nullptr, {}, needs, nullptr,
                          needs ? std::move(backward) : BackwardFn{}});
    return {this, nodes_.size() - 1};
  }

  Var<Scalar> record(Tensor<Scalar> value, const std::vector<Var<Scalar>>& parents,
                     BackwardFn backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id()].needs_grad;
    nodes_.push_back(Node{std::move(value), nullptr, {}, needs, nullptr,
                          needs ? std::move(backward) : BackwardFn{}});
    return {this, nodes_.size() - 1};
  }

  const Tensor<Scalar>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(const Var<Scalar>& v) const { return nodes_[v.id()].needs_grad; }

  /// Adjoint buffer of a node during a backward sweep.
  Vector<Scalar>& adjoint(std::size_t id) { return nodes_[id].adjoint; }
  Vector<Scalar>& adjoint(const Var<Scalar>& v) { return nodes_[v.id()].adjoint; }

  std::size_t size() const { return nodes_.size(); }

  /// Propagates `seed` (broadcast over every element of `root`) back to the leaves.
  void backward(const Var<Scalar>& root, Scalar seed = Scalar(1)) {
    assert(root.tape() == this);
    const std::size_t last = root.id();
    for (std::size_t i = 0; i <= last; ++i) {
      Node& n = nodes_[i];
      if (n.needs_grad) n.adjoint = Vector<Scalar>::Zero(value(i).size());
    }
    if (!nodes_[last].needs_grad) return;
    nodes_[last].adjoint.setConstant(seed);
    for (std::size_t i = last + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad) continue;
      if (n.sink) {
        *n.sink += n.adjoint;
      } else if (n.backward) {
        n.backward(*this, i);
      }
    }
  }

 private:
  struct Node {
    Tensor<Scalar> value;
    const Tensor<Scalar>* external;
    Vector<Scalar> adjoint;
    bool needs_grad;
    Vector<Scalar>* sink;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<Scalar>*, std::size_t> leaves_;
};

}  // namespace seqpatch
