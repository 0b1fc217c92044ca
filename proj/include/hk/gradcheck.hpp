// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hk/tensor.hpp"

namespace hk {

struct GradCheckReport {
  std::string parameter_name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  /// Relative errors are taken against max(|autodiff|, |numeric|, floor). At
  /// h = 1e-5 the round-off of a central difference on an O(1) loss is about
  /// 1e-11, so the floor keeps near-zero entries from dominating.
  double floor = 1e-4;
  /// 2: (f(x+h) - f(x-h)) / 2h. 4: the five-point central stencil, whose
  /// O(h^4) truncation error allows a larger step on curved losses.
  int order = 2;
};

using ScalarFn = std::function<double()>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every entry of
/// x (order 2), or the five-point central stencil (order 4). `f` must read x
/// through the same handle and be deterministic.
std::vector<double> finite_diff_grad(const ScalarFn& f, Tensor& x, double step = 1e-5,
                                     int order = 2);

/// Convenience overload for functions of a tensor.
std::vector<double> finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                                     double step = 1e-5);

/// Compares an autodiff gradient against a numeric one.
GradCheckReport compare_gradients(std::string name, const std::vector<double>& autodiff,
                                  const std::vector<double>& numeric,
                                  const GradCheckOptions& options = {});

/// Runs backward once through `loss` (built from the current parameter values)
/// and checks every listed parameter against central differences of the same loss.
std::vector<GradCheckReport> check_gradients(const std::function<Tensor()>& loss,
                                             std::vector<std::pair<std::string, Tensor>> params,
                                             const GradCheckOptions& options = {});

}  // namespace hk
