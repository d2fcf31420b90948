#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "incrseg/tensor.hpp"

namespace incrseg {

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Leaves are either trainable
// parameters (requires_grad) or constants. An op whose inputs are all
// constants produces a constant and records nothing, so forward passes of a
// frozen model never build a graph.
class Var {
 public:
  struct Node;
  using BackwardFn = std::function<void(Node&)>;

  struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    // Returns the gradient buffer, allocating zeros on first use.
    Tensor& grad_buffer();
  };

  Var() = default;

  static Var parameter(Tensor value);
  static Var constant(Tensor value);
  // Builds an op result. `backward` reads node.grad and accumulates into
  // node.parents[i]->grad_buffer() for parents that require grad.
  static Var op(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(std::size_t axis) const { return node_->value.dim(axis); }
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  // Gradient tensor; zeros of the value shape if nothing was accumulated.
  Tensor grad() const;
  void zero_grad();

  Var detach() const { return constant(node_->value); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1 and propagates through the recorded graph.
// root must hold a single element.
void backward(const Var& root);

}  // namespace incrseg
