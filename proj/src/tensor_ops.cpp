// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hk/errors.hpp"
#include "hk/kernels.hpp"
#include "hk/tensor.hpp"

namespace hk {
namespace {

enum class Broadcast { same, suffix, rowwise, scalar };

Broadcast classify(const char* op, const Shape& a, const Shape& b) {
  if (a == b) {
    return Broadcast::same;
  }
  if (shape_numel(b) == 1) {
    return Broadcast::scalar;
  }
  if (b.size() <= a.size() && std::equal(b.begin(), b.end(), a.end() - b.size())) {
    return Broadcast::suffix;
  }
  if (a.size() == b.size() && !a.empty() && b.back() == 1 &&
      std::equal(a.begin(), a.end() - 1, b.begin())) {
    return Broadcast::rowwise;
  }
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                       shape_str(a));
}

struct BroadcastIndex {
  Broadcast kind;
  std::size_t b_numel;
  std::size_t last;
  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Broadcast::same:
        return i;
      case Broadcast::suffix:
        return i % b_numel;
      case Broadcast::rowwise:
        return i / last;
      case Broadcast::scalar:
        return 0;
    }
    return 0;
  }
};

BroadcastIndex broadcast_index(const char* op, const Tensor& a, const Tensor& b) {
  const auto kind = classify(op, a.shape(), b.shape());
  const std::size_t last = a.shape().empty() ? 1 : a.shape().back();
  return {kind, b.numel(), last};
}

TensorImpl& parent(TensorImpl& self, std::size_t i) { return self.parents[i].impl(); }

template <typename Forward, typename LocalGrad>
Tensor unary(const Tensor& x, const char* op, Forward forward, LocalGrad local_grad) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = forward(xv[i]);
  }
  return make_result(x.shape(), std::move(out), op, {x}, [local_grad](TensorImpl& self) {
    auto& in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * local_grad(in.values[i], self.values[i]);
    }
  });
}

void check_matmul_operands(const char* op, const Tensor& a, const Tensor& b, std::size_t inner_a,
                           std::size_t inner_b) {
  if (inner_a != inner_b) {
    throw DimensionError(std::string(op) + ": inner extents differ for " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
}

// Leading (batch) extents of a batched matmul operand.
bool same_batch(const Shape& a, const Shape& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end() - 2, b.begin());
}

}  // namespace

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t k = a.dim(-1);
  const std::size_t n = b.dim(-1);
  check_matmul_operands("matmul", a, b, k, b.dim(-2));
  Shape out_shape = a.shape();
  out_shape.back() = n;
  if (b.rank() == 2) {
    const std::size_t rows = a.numel() / k;
    std::vector<double> out(rows * n);
    kernels::gemm_nn(a.values(), b.values(), out, rows, k, n, false);
    return make_result(out_shape, std::move(out), "matmul", {a, b},
                       [rows, k, n](TensorImpl& self) {
                         auto& pa = parent(self, 0);
                         auto& pb = parent(self, 1);
                         if (pa.requires_grad) {
                           kernels::gemm_nt(self.grad, pb.values, pa.ensure_grad(), rows, n, k, true);
                         }
                         if (pb.requires_grad) {
                           kernels::gemm_tn(pa.values, self.grad, pb.ensure_grad(), k, rows, n, true);
                         }
                       });
  }
  if (!same_batch(a.shape(), b.shape())) {
    throw DimensionError("matmul: batch extents differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(-2);
  const std::size_t batch = a.numel() / (m * k);
  std::vector<double> out(batch * m * n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t s = 0; s < batch; ++s) {
    kernels::gemm_nn(av.subspan(s * m * k, m * k), bv.subspan(s * k * n, k * n),
                     std::span(out).subspan(s * m * n, m * n), m, k, n, false);
  }
  return make_result(out_shape, std::move(out), "matmul", {a, b},
                     [batch, m, k, n](TensorImpl& self) {
                       auto& pa = parent(self, 0);
                       auto& pb = parent(self, 1);
                       const std::span<const double> g = self.grad;
                       for (std::size_t s = 0; s < batch; ++s) {
                         const auto gs = g.subspan(s * m * n, m * n);
                         if (pa.requires_grad) {
                           kernels::gemm_nt(gs, std::span<const double>(pb.values).subspan(s * k * n, k * n),
                                            std::span(pa.ensure_grad()).subspan(s * m * k, m * k), m, n, k,
                                            true);
                         }
                         if (pb.requires_grad) {
                           kernels::gemm_tn(std::span<const double>(pa.values).subspan(s * m * k, m * k), gs,
                                            std::span(pb.ensure_grad()).subspan(s * k * n, k * n), k, m, n,
                                            true);
                         }
                       }
                     });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul_bt: operands need rank >= 2, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t k = a.dim(-1);
  const std::size_t n = b.dim(-2);
  check_matmul_operands("matmul_bt", a, b, k, b.dim(-1));
  Shape out_shape = a.shape();
  out_shape.back() = n;
  if (b.rank() == 2) {
    const std::size_t rows = a.numel() / k;
    std::vector<double> out(rows * n);
    kernels::gemm_nt(a.values(), b.values(), out, rows, k, n, false);
    return make_result(out_shape, std::move(out), "matmul_bt", {a, b},
                       [rows, k, n](TensorImpl& self) {
                         auto& pa = parent(self, 0);
                         auto& pb = parent(self, 1);
                         if (pa.requires_grad) {
                           kernels::gemm_nn(self.grad, pb.values, pa.ensure_grad(), rows, n, k, true);
                         }
                         if (pb.requires_grad) {
                           kernels::gemm_tn(self.grad, pa.values, pb.ensure_grad(), n, rows, k, true);
                         }
                       });
  }
  if (!same_batch(a.shape(), b.shape())) {
    throw DimensionError("matmul_bt: batch extents differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(-2);
  const std::size_t batch = a.numel() / (m * k);
  std::vector<double> out(batch * m * n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t s = 0; s < batch; ++s) {
    kernels::gemm_nt(av.subspan(s * m * k, m * k), bv.subspan(s * n * k, n * k),
                     std::span(out).subspan(s * m * n, m * n), m, k, n, false);
  }
  return make_result(out_shape, std::move(out), "matmul_bt", {a, b},
                     [batch, m, k, n](TensorImpl& self) {
                       auto& pa = parent(self, 0);
                       auto& pb = parent(self, 1);
                       const std::span<const double> g = self.grad;
                       for (std::size_t s = 0; s < batch; ++s) {
                         const auto gs = g.subspan(s * m * n, m * n);
                         if (pa.requires_grad) {
                           kernels::gemm_nn(gs, std::span<const double>(pb.values).subspan(s * n * k, n * k),
                                            std::span(pa.ensure_grad()).subspan(s * m * k, m * k), m, n, k,
                                            true);
                         }
                         if (pb.requires_grad) {
                           kernels::gemm_tn(gs, std::span<const double>(pa.values).subspan(s * m * k, m * k),
                                            std::span(pb.ensure_grad()).subspan(s * n * k, n * k), n, m, k,
                                            true);
                         }
                       }
                     });
}

// ---- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const auto bi = broadcast_index("add", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] + bv[bi(i)];
  }
  return make_result(a.shape(), std::move(out), "add", {a, b}, [bi](TensorImpl& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += self.grad[i];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        gb[bi(i)] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto bi = broadcast_index("sub", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] - bv[bi(i)];
  }
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [bi](TensorImpl& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += self.grad[i];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        gb[bi(i)] -= self.grad[i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto bi = broadcast_index("mul", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] * bv[bi(i)];
  }
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [bi](TensorImpl& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += self.grad[i] * pb.values[bi(i)];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        gb[bi(i)] += self.grad[i] * pa.values[i];
      }
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  const auto bi = broadcast_index("div", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  for (double d : bv) {
    if (d == 0.0) {
      throw NumericError("div: division by zero");
    }
  }
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] / bv[bi(i)];
  }
  return make_result(a.shape(), std::move(out), "div", {a, b}, [bi](TensorImpl& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += self.grad[i] / pb.values[bi(i)];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double d = pb.values[bi(i)];
        gb[bi(i)] -= self.grad[i] * pa.values[i] / (d * d);
      }
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) {
      throw NumericError("log: non-positive input " + std::to_string(v));
    }
  }
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary(
      x, "clamp_min", [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

// ---- reductions -----------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) {
    total += v;
  }
  return make_result({}, {total}, "sum", {x}, [](TensorImpl& self) {
    auto& in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    const double g = self.grad[0];
    for (double& gi : in.ensure_grad()) {
      gi += g;
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) {
    throw ContractError("mean of an empty tensor");
  }
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_last(const Tensor& x) {
  if (x.rank() == 0) {
    throw DimensionError("sum_last on a rank-0 tensor");
  }
  const std::size_t cols = x.dim(-1);
  const std::size_t rows = x.numel() / cols;
  const auto xv = x.values();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      acc += xv[r * cols + j];
    }
    out[r] = acc;
  }
  Shape shape = x.shape();
  shape.back() = 1;
  return make_result(shape, std::move(out), "sum_last", {x}, [rows, cols](TensorImpl& self) {
    auto& in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    auto& g = in.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) {
        g[r * cols + j] += self.grad[r];
      }
    }
  });
}

Tensor mean_last(const Tensor& x) {
  const std::size_t cols = x.dim(-1);
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  return reshape(scale(sum_last(x), 1.0 / static_cast<double>(cols)), shape);
}

// ---- masking, normalization ------------------------------------------------

Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> keep, double fill) {
  if (keep.size() != x.numel()) {
    throw DimensionError("masked_fill: mask of " + std::to_string(keep.size()) +
                         " entries for tensor " + shape_str(x.shape()));
  }
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = keep[i] ? xv[i] : fill;
  }
  std::vector<std::uint8_t> saved(keep.begin(), keep.end());
  return make_result(x.shape(), std::move(out), "masked_fill", {x},
                     [saved = std::move(saved)](TensorImpl& self) {
                       auto& in = parent(self, 0);
                       if (!in.requires_grad) {
                         return;
                       }
                       auto& g = in.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (saved[i]) {
                           g[i] += self.grad[i];
                         }
                       }
                     });
}

Tensor softmax_row(const Tensor& x) {
  if (x.rank() == 0 || x.dim(-1) == 0) {
    throw DimensionError("softmax_row needs a non-empty last axis, got " + shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(-1);
  const std::size_t rows = x.numel() / cols;
  const auto xv = x.values();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = xv.subspan(r * cols, cols);
    if (std::all_of(row.begin(), row.end(), [](double v) { return v == kNegInf; })) {
      throw DegeneracyError("softmax_row: row " + std::to_string(r) + " is entirely -inf");
    }
  }
  std::vector<double> out(xv.size());
  kernels::softmax_rows(xv, out, rows, cols);
  return make_result(x.shape(), std::move(out), "softmax_row", {x}, [rows, cols](TensorImpl& self) {
    auto& in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    kernels::softmax_rows_backward(self.values, self.grad, in.ensure_grad(), rows, cols);
  });
}

Tensor detach(const Tensor& x) {
  return make_result(x.shape(), std::vector<double>(x.values().begin(), x.values().end()),
                     "detach", {}, nullptr);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.dim(-1);
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = xv.subspan(r * d, d);
    double mu = 0.0;
    for (double v : row) {
      mu += v;
    }
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) {
      var += (v - mu) * (v - mu);
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm", {x, gain, bias},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& self) {
        auto& px = parent(self, 0);
        auto& pg = parent(self, 1);
        auto& pb = parent(self, 2);
        const auto& g = self.grad;
        if (pg.requires_grad || pb.requires_grad) {
          auto* gg = pg.requires_grad ? &pg.ensure_grad() : nullptr;
          auto* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
              if (gg) {
                (*gg)[j] += g[r * d + j] * xhat[r * d + j];
              }
              if (gb) {
                (*gb)[j] += g[r * d + j];
              }
            }
          }
        }
        if (!px.requires_grad) {
          return;
        }
        auto& gx = px.ensure_grad();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dy = 0.0;
          double mean_dy_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dy = g[r * d + j] * pg.values[j];
            mean_dy += dy;
            mean_dy_xhat += dy * xhat[r * d + j];
          }
          mean_dy *= inv_d;
          mean_dy_xhat *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dy = g[r * d + j] * pg.values[j];
            gx[r * d + j] += inv_std[r] * (dy - mean_dy - xhat[r * d + j] * mean_dy_xhat);
          }
        }
      });
}

// ---- indexing, layout ----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  return make_result(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()),
                     "reshape", {x}, [](TensorImpl& self) {
                       auto& in = parent(self, 0);
                       if (!in.requires_grad) {
                         return;
                       }
                       auto& g = in.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += self.grad[i];
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids, std::size_t batch,
                 std::size_t len) {
  if (table.rank() != 2) {
    throw DimensionError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  }
  if (ids.size() != batch * len) {
    throw DimensionError("embedding: " + std::to_string(ids.size()) + " ids for batch " +
                         std::to_string(batch) + " x len " + std::to_string(len));
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  const auto tv = table.values();
  std::vector<double> out(batch * len * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab) {
      throw ContractError("embedding: token id " + std::to_string(ids[t]) +
                          " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[t]) * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(t * d));
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return make_result({batch, len, d}, std::move(out), "embedding", {table},
                     [d, saved = std::move(saved)](TensorImpl& self) {
                       auto& tab = parent(self, 0);
                       if (!tab.requires_grad) {
                         return;
                       }
                       auto& g = tab.ensure_grad();
                       for (std::size_t t = 0; t < saved.size(); ++t) {
                         const std::size_t row = static_cast<std::size_t>(saved[t]);
                         for (std::size_t j = 0; j < d; ++j) {
                           g[row * d + j] += self.grad[t * d + j];
                         }
                       }
                     });
}

Tensor select_token(const Tensor& x, std::size_t position) {
  if (x.rank() != 3 || position >= x.dim(1)) {
    throw DimensionError("select_token: position " + std::to_string(position) + " in " +
                         shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t l = x.dim(1);
  const std::size_t d = x.dim(2);
  const auto xv = x.values();
  std::vector<double> out(b * d);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out[i * d + j] = xv[(i * l + position) * d + j];
    }
  }
  return make_result({b, d}, std::move(out), "select_token", {x},
                     [b, l, d, position](TensorImpl& self) {
                       auto& in = parent(self, 0);
                       if (!in.requires_grad) {
                         return;
                       }
                       auto& g = in.ensure_grad();
                       for (std::size_t i = 0; i < b; ++i) {
                         for (std::size_t j = 0; j < d; ++j) {
                           g[(i * l + position) * d + j] += self.grad[i * d + j];
                         }
                       }
                     });
}

Tensor gather_last(const Tensor& x, std::span<const int> index) {
  const std::size_t cols = x.dim(-1);
  const std::size_t rows = x.numel() / cols;
  if (index.size() != rows) {
    throw DimensionError("gather_last: " + std::to_string(index.size()) + " indices for " +
                         shape_str(x.shape()));
  }
  const auto xv = x.values();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= cols) {
      throw ContractError("gather_last: index " + std::to_string(index[r]) + " out of range " +
                          std::to_string(cols));
    }
    out[r] = xv[r * cols + static_cast<std::size_t>(index[r])];
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<int> saved(index.begin(), index.end());
  return make_result(shape, std::move(out), "gather_last", {x},
                     [cols, saved = std::move(saved)](TensorImpl& self) {
                       auto& in = parent(self, 0);
                       if (!in.requires_grad) {
                         return;
                       }
                       auto& g = in.ensure_grad();
                       for (std::size_t r = 0; r < saved.size(); ++r) {
                         g[r * cols + static_cast<std::size_t>(saved[r])] += self.grad[r];
                       }
                     });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw DimensionError("split_heads: " + std::to_string(heads) + " heads for " +
                         shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t l = x.dim(1);
  const std::size_t dh = x.dim(2) / heads;
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  // out[b, h, t, e] = x[b, t, h * dh + e]
  auto src = [=](std::size_t bi, std::size_t h, std::size_t t, std::size_t e) {
    return (bi * l + t) * heads * dh + h * dh + e;
  };
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < l; ++t) {
        for (std::size_t e = 0; e < dh; ++e) {
          out[o++] = xv[src(bi, h, t, e)];
        }
      }
    }
  }
  return make_result({b, heads, l, dh}, std::move(out), "split_heads", {x},
                     [b, heads, l, dh, src](TensorImpl& self) {
                       auto& in = parent(self, 0);
                       if (!in.requires_grad) {
                         return;
                       }
                       auto& g = in.ensure_grad();
                       std::size_t o = 0;
                       for (std::size_t bi = 0; bi < b; ++bi) {
                         for (std::size_t h = 0; h < heads; ++h) {
                           for (std::size_t t = 0; t < l; ++t) {
                             for (std::size_t e = 0; e < dh; ++e) {
                               g[src(bi, h, t, e)] += self.grad[o++];
                             }
                           }
                         }
                       }
                     });
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 4) {
    throw DimensionError("merge_heads: expected [B, H, L, dh], got " + shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t heads = x.dim(1);
  const std::size_t l = x.dim(2);
  const std::size_t dh = x.dim(3);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  auto dst = [=](std::size_t bi, std::size_t h, std::size_t t, std::size_t e) {
    return (bi * l + t) * heads * dh + h * dh + e;
  };
  std::size_t i = 0;
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < l; ++t) {
        for (std::size_t e = 0; e < dh; ++e) {
          out[dst(bi, h, t, e)] = xv[i++];
        }
      }
    }
  }
  return make_result({b, l, heads * dh}, std::move(out), "merge_heads", {x},
                     [b, heads, l, dh, dst](TensorImpl& self) {
                       auto& in = parent(self, 0);
                       if (!in.requires_grad) {
                         return;
                       }
                       auto& g = in.ensure_grad();
                       std::size_t i = 0;
                       for (std::size_t bi = 0; bi < b; ++bi) {
                         for (std::size_t h = 0; h < heads; ++h) {
                           for (std::size_t t = 0; t < l; ++t) {
                             for (std::size_t e = 0; e < dh; ++e) {
                               g[i++] += self.grad[dst(bi, h, t, e)];
                             }
                           }
                         }
                       }
                     });
}

}  // namespace hk
