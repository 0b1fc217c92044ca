// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "hk/config.hpp"
#include "hk/model.hpp"

namespace hk {

/// Linear warmup to the base rate over ceil(warmup_ratio * total) steps, then
/// linear decay to zero at `total_steps`.
double scheduled_learning_rate(double base, std::size_t step, std::size_t total_steps,
                               double warmup_ratio);

/// Adam with decoupled weight decay. Bias vectors are not decayed.
class AdamW {
 public:
  AdamW(std::vector<NamedParameter> parameters, const OptimizerConfig& config);

  /// Applies one update at `learning_rate` from the accumulated gradients,
  /// then clears them. NumericError if a parameter becomes non-finite.
  void step(double learning_rate);
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    NamedParameter parameter;
    std::vector<double> m;
    std::vector<double> v;
    bool decay = true;
  };

  std::vector<Slot> slots_;
  OptimizerConfig config_;
  std::size_t t_ = 0;
};

}  // namespace hk
