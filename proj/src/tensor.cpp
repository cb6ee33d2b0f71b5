// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "common.hpp"

namespace uktr {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> value,
               bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(value.size()))
    fail_usage("tensor data length " + std::to_string(value.size()) +
               " does not match shape " + shape_str(shape));
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double fill, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), fill);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) fail_usage("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const auto& sh = node_->shape;
  if (idx.size() != sh.size()) fail_usage("at(): rank mismatch");
  int64_t flat = 0;
  size_t i = 0;
  for (int v : idx) {
    flat = flat * sh[i] + v;
    ++i;
  }
  return node_->value[static_cast<size_t>(flat)];
}

std::vector<double>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone_detached() const {
  return Tensor(node_->shape, node_->value, false);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    fail_usage("backward() requires a defined scalar loss");
  // Iterative post-order DFS; recursion would overflow on long CTC chains.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      TensorNode* child = node->parents[next_child].get();
      ++next_child;
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    n->ensure_grad();
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace uktr
