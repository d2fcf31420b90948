#include "incrseg/autograd.hpp"

#include <unordered_set>

#include "incrseg/error.hpp"

namespace incrseg {

Tensor& Var::Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::op(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const Var& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (Var& in : inputs) node->parents.push_back(std::move(in.node_));
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

double Var::item() const {
  if (node_->value.size() != 1) {
    throw Error(ErrorCode::ShapeError, "item() on tensor of shape " + shape_string(node_->value.shape()));
  }
  return node_->value[0];
}

Tensor Var::grad() const {
  if (!node_->grad.empty()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1) {
    throw Error(ErrorCode::ShapeError, "backward() requires a scalar root");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<Var::Node*> order;
  std::unordered_set<Var::Node*> visited;
  std::vector<std::pair<Var::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Var::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Var::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace incrseg
