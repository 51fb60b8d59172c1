#pragma once

#include "angio/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace angio {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor<Scalar>& g) {
    if (grad.empty()) {
      grad = g;
    } else {
      grad.array() += g.array();
    }
  }
  Tensor<Scalar>& grad_buffer() {
    if (grad.empty()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

/// Handle to a node in a dynamically built computation graph.
///
/// Leaves created with requires_grad=true accumulate gradients across backward
/// passes until zero_grad(). Interior nodes keep their parents alive, so the
/// graph is released when the last Var referencing the root goes away.
template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var from_node(NodePtr node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  Scalar item() const { return node_->value.item(); }
  const NodePtr& node() const { return node_; }

  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  /// Reverse-mode sweep from this (scalar) node.
  void backward() const;

 private:
  NodePtr node_;
};

/// Builds an op result node; backward_fn is only attached when some input needs grad.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                        std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<Scalar>::from_node(std::move(node));
}

template <typename Scalar>
void Var<Scalar>::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() requires a scalar root, got " + shape().str());
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the differentiable subgraph.
  std::vector<Node<Scalar>*> order;
  std::vector<std::pair<Node<Scalar>*, size_t>> stack;
  std::unordered_set<Node<Scalar>*> marked;
  stack.emplace_back(node_.get(), 0);
  marked.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<Scalar>* p = n->parents[idx++].get();
      if (p->requires_grad && !marked.count(p)) {
        marked.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->accumulate(Tensor<Scalar>(node_->value.shape(), Scalar(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are no longer needed; leaves keep theirs.
  for (auto* n : order) {
    if (n->backward_fn) n->grad = Tensor<Scalar>();
  }
}

}  // namespace angio
