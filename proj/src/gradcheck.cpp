// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hk/errors.hpp"

namespace hk {

std::vector<double> finite_diff_grad(const ScalarFn& f, Tensor& x, double step, int order) {
  if (!(step > 0.0)) {
    throw ContractError("finite_diff_grad: step must be positive");
  }
  if (order != 2 && order != 4) {
    throw ContractError("finite_diff_grad: order must be 2 or 4");
  }
  auto xs = x.mutable_values();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double saved = xs[i];
    auto at = [&](double offset) {
      xs[i] = saved + offset;
      return f();
    };
    const double d1 = at(step) - at(-step);
    if (order == 2) {
      out[i] = d1 / (2.0 * step);
    } else {
      const double d2 = at(2.0 * step) - at(-2.0 * step);
      out[i] = (8.0 * d1 - d2) / (12.0 * step);
    }
    xs[i] = saved;
  }
  return out;
}

std::vector<double> finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                                     double step) {
  NoGradGuard guard;
  return finite_diff_grad([&] { return f(x).item(); }, x, step, 2);
}

GradCheckReport compare_gradients(std::string name, const std::vector<double>& autodiff,
                                  const std::vector<double>& numeric,
                                  const GradCheckOptions& options) {
  if (autodiff.size() != numeric.size()) {
    throw DimensionError("compare_gradients: size mismatch for " + name);
  }
  GradCheckReport report;
  report.parameter_name = std::move(name);
  for (std::size_t i = 0; i < autodiff.size(); ++i) {
    const double abs_err = std::abs(autodiff[i] - numeric[i]);
    const double denom = std::max({std::abs(autodiff[i]), std::abs(numeric[i]), options.floor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

std::vector<GradCheckReport> check_gradients(const std::function<Tensor()>& loss,
                                             std::vector<std::pair<std::string, Tensor>> params,
                                             const GradCheckOptions& options) {
  for (auto& [name, p] : params) {
    p.zero_grad();
  }
  backward(loss());
  std::vector<GradCheckReport> reports;
  reports.reserve(params.size());
  NoGradGuard guard;
  for (auto& [name, p] : params) {
    const auto numeric = finite_diff_grad([&] { return loss().item(); }, p, options.step, options.order);
    reports.push_back(compare_gradients(name, p.grad(), numeric, options));
  }
  return reports;
}

}  // namespace hk
