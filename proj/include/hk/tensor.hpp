// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with a reverse-mode autodiff graph.
//
// A Tensor is a shared handle: copies alias the same storage and graph node.
// Ops build a node only when at least one input requires a gradient and grad
// mode is on for the calling thread. Gradients accumulate into leaves across
// backward() calls until zero_grad(); intermediate gradients are rebuilt on
// every backward() call.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hk {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct TensorImpl;

using BackwardFn = std::function<void(TensorImpl& self)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient first reaches this tensor
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<Tensor> parents;
  BackwardFn backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Extent of axis `axis`; negative values count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Raw write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient buffer; all zeros when no gradient has reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();
  const char* op() const;

  /// True when both handles refer to the same storage.
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

  TensorImpl& impl() const;
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, std::vector<double>, const char*, std::vector<Tensor>,
                            BackwardFn);
  std::shared_ptr<TensorImpl> impl_;
};

/// Builds an op output. The backward closure is attached only when grad mode is
/// on and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::vector<Tensor> parents, BackwardFn backward);

bool grad_enabled();

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse sweep from a single-element root. Visits each node once in reverse
/// topological order and accumulates into every reachable leaf that requires a
/// gradient.
void backward(const Tensor& root);

void zero_grad(std::span<Tensor> tensors);

// ---- linear algebra -------------------------------------------------------

/// a[..., m, k] * b[k, n] (shared b) or a[..., m, k] * b[..., k, n] (batched).
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[..., m, k] * b^T with b[n, k] shared or b[..., n, k] batched.
Tensor matmul_bt(const Tensor& a, const Tensor& b);
/// x[..., in] -> x * w^T with w[out, in].
inline Tensor linear(const Tensor& x, const Tensor& w) { return matmul_bt(x, w); }

// ---- elementwise ------------------------------------------------------------
//
// Binary ops accept b with the same shape as a, a trailing suffix of a's shape
// (bias add), a's shape with the last extent 1 (row-wise scale), or a single
// element. Anything else is a DimensionError.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws NumericError if any denominator is exactly zero.
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor exp(const Tensor& x);
/// Throws NumericError on non-positive input.
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);
/// Exact erf form.
Tensor gelu(const Tensor& x);
/// max(x, floor); the gradient is passed where x > floor.
Tensor clamp_min(const Tensor& x, double floor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

// ---- reductions -------------------------------------------------------------

/// Sum of all entries, shape {}.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum over the last axis keeping it with extent 1.
Tensor sum_last(const Tensor& x);
/// Mean over the last axis, dropping it.
Tensor mean_last(const Tensor& x);

// ---- masking, normalization -------------------------------------------------

/// Writes fill where keep[i] == 0. `keep` has x.numel() entries. Filled
/// positions pass zero gradient.
Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> keep, double fill);
/// Softmax over the last axis. A row with no finite entry is a DegeneracyError.
Tensor softmax_row(const Tensor& x);
/// Same values as x with no backward edge.
Tensor detach(const Tensor& x);
/// Normalizes over the last axis, then applies gain and bias of extent D.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// ---- indexing, layout -------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
/// table[V, D] gathered at ids -> [batch, len, D].
Tensor embedding(const Tensor& table, std::span<const int> ids, std::size_t batch,
                 std::size_t len);
/// x[B, L, D] -> x[:, position, :] of shape [B, D].
Tensor select_token(const Tensor& x, std::size_t position);
/// x[..., C] -> x[..., index[r]] of shape [...].
Tensor gather_last(const Tensor& x, std::span<const int> index);
/// x[B, L, H*dh] -> [B, H, L, dh].
Tensor split_heads(const Tensor& x, std::size_t heads);
/// Inverse of split_heads.
Tensor merge_heads(const Tensor& x);

}  // namespace hk
