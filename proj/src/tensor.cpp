// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "hk/errors.hpp"

namespace hk {
namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "x" : "") << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.empty() && !values.empty()) {
    grad.assign(values.size(), 0.0);
  }
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

TensorImpl& Tensor::impl() const {
  if (!impl_) {
    throw ContractError("use of an undefined tensor");
  }
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(int axis) const {
  const auto& s = shape();
  const int r = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl().values.size(); }

std::span<const double> Tensor::values() const { return impl().values; }

std::span<double> Tensor::mutable_values() { return impl().values; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl().values[0];
}

double Tensor::operator[](std::size_t flat_index) const { return impl().values.at(flat_index); }

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  impl().requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& im = impl();
  if (im.grad.empty()) {
    return std::vector<double>(im.values.size(), 0.0);
  }
  return im.grad;
}

void Tensor::zero_grad() { impl().grad.clear(); }

const char* Tensor::op() const { return impl().op; }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::vector<Tensor> parents, BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->op = op;
  if (t_grad_enabled && backward) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
    if (any) {
      impl->requires_grad = true;
      impl->parents = std::move(parents);
      impl->backward_fn = std::move(backward);
    }
  }
  return Tensor(std::move(impl));
}

void backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw ContractError("backward() needs a single-element root, got shape " +
                        shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    return;
  }
  // Iterative post-order DFS; `order` ends up topologically sorted.
  std::vector<TensorImpl*> order;
  std::unordered_set<const TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(&root.impl(), 0);
  visited.insert(&root.impl());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* parent = &node->parents[next++].impl();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorImpl* node : order) {
    if (!node->is_leaf()) {
      node->grad.clear();
    }
  }
  root.impl().ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (!node->is_leaf() && !node->grad.empty()) {
      node->backward_fn(*node);
    }
  }
}

void zero_grad(std::span<Tensor> tensors) {
  for (auto& t : tensors) {
    t.zero_grad();
  }
}

}  // namespace hk
