// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/optim.hpp"

#include <algorithm>
#include <cmath>

#include "hk/errors.hpp"

namespace hk {

double scheduled_learning_rate(double base, std::size_t step, std::size_t total_steps,
                               double warmup_ratio) {
  if (total_steps == 0) {
    return 0.0;
  }
  const auto warmup = static_cast<std::size_t>(
      std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup) {
    return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (step >= total_steps) {
    return 0.0;
  }
  return base * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

AdamW::AdamW(std::vector<NamedParameter> parameters, const OptimizerConfig& config)
    : config_(config) {
  for (auto& p : parameters) {
    Slot s;
    const auto n = p.tensor.numel();
    s.decay = !(p.name.size() >= 4 && p.name.compare(p.name.size() - 4, 4, "bias") == 0);
    s.parameter = std::move(p);
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    slots_.push_back(std::move(s));
  }
}

void AdamW::step(double learning_rate) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& s : slots_) {
    auto& t = s.parameter.tensor;
    if (!t.has_grad()) {
      continue;
    }
    const auto& g = t.impl().grad;
    auto w = t.mutable_values();
    const double decay = s.decay ? learning_rate * config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * g[i];
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = s.m[i] / c1;
      const double v_hat = s.v[i] / c2;
      w[i] -= decay * w[i] + learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    if (!std::all_of(w.begin(), w.end(), [](double x) { return std::isfinite(x); })) {
      throw NumericError("AdamW: non-finite value in " + s.parameter.name + " at step " +
                         std::to_string(t_));
    }
  }
  zero_grad();
}

void AdamW::zero_grad() {
  for (auto& s : slots_) {
    s.parameter.tensor.zero_grad();
  }
}

}  // namespace hk
