// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major kernels behind the tensor ops.
//
// Every kernel exists twice: an OpenMP version used by the engine and a plain
// serial version under `reference` that the tests and the benchmark compare
// against. Both sum each output element over the reduction index in the same
// ascending order, so their results are bit-identical for any thread count.

#pragma once

#include <cstddef>
#include <span>

namespace hk::kernels {

/// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// C[m x n] (+)= A[m x k] * B^T, with B stored n x k.
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// C[m x n] (+)= A^T * B, with A stored k x m and B stored k x n.
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// Row-wise softmax with max subtraction. -inf entries produce exact zeros.
/// Rows must contain at least one finite entry.
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);

/// dx += y * (dy - <dy, y>) per row.
void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols);

namespace reference {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);
void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols);

}  // namespace reference

/// Work (multiply-adds) below which kernels stay on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

}  // namespace hk::kernels
