// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace hk::kernels {
namespace {

using Index = std::ptrdiff_t;

inline void softmax_row(const double* x, double* y, std::size_t cols) {
  double row_max = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) {
    row_max = std::max(row_max, x[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double e = std::exp(x[j] - row_max);
    y[j] = e;
    total += e;
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] *= inv;
  }
}

inline void softmax_row_backward(const double* y, const double* dy, double* dx,
                                 std::size_t cols) {
  double inner = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    inner += dy[j] * y[j];
  }
  for (std::size_t j = 0; j < cols; ++j) {
    dx[j] += y[j] * (dy[j] - inner);
  }
}

inline void gemm_nn_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                        std::size_t n, bool accumulate) {
  if (!accumulate) {
    std::fill(c_row, c_row + n, 0.0);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) {
      c_row[j] += av * b_row[j];
    }
  }
}

inline void gemm_tn_row(const double* a, const double* b, double* c_row, std::size_t col,
                        std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) {
    std::fill(c_row, c_row + n, 0.0);
  }
  for (std::size_t i = 0; i < k; ++i) {
    const double av = a[i * m + col];
    const double* b_row = b + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      c_row[j] += av * b_row[j];
    }
  }
}

}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    gemm_nn_row(ap + i * k, bp, cp + i * n, k, n, accumulate);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  // Transposing B once turns the strided dot products into contiguous axpys.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) {
      bt[p * n + j] = b[j * k + p];
    }
  }
  gemm_nn(a, bt, c, m, k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (Index col = 0; col < static_cast<Index>(m); ++col) {
    gemm_tn_row(ap, bp, cp + col * n, static_cast<std::size_t>(col), m, k, n, accumulate);
  }
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols) {
  const double* x = in.data();
  double* y = out.data();
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    softmax_row(x + r * cols, y + r * cols, cols);
  }
}

void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * cols;
    softmax_row_backward(y.data() + off, dy.data() + off, dx.data() + off, cols);
  }
}

namespace reference {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a[i * k + p] * b[p * n + j];
      }
      c[i * n + j] = acc;
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a[i * k + p] * b[j * k + p];
      }
      c[i * n + j] = acc;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a[p * m + i] * b[p * n + j];
      }
      c[i * n + j] = acc;
    }
  }
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(in.data() + r * cols, out.data() + r * cols, cols);
  }
}

void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row_backward(y.data() + r * cols, dy.data() + r * cols, dx.data() + r * cols, cols);
  }
}

}  // namespace reference
}  // namespace hk::kernels
