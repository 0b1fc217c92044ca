// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

namespace hk {

/// Mean of the two middle values for even sizes. ContractError when empty.
double median(std::span<const double> values);

/// Median absolute deviation from the median (unscaled).
double median_absolute_deviation(std::span<const double> values);

struct PermutationTest {
  double mean_difference = 0.0;
  double p_value = 1.0;
  std::uint64_t permutations = 0;
  bool exact = true;
};

/// Two-sided paired sign-flip test of mean(a - b) = 0.
///
/// Every sign assignment is enumerated up to 20 pairs; beyond that
/// `monte_carlo_draws` random assignments (plus the observed one) are used.
/// The p-value counts assignments whose |mean| reaches the observed |mean|.
/// ContractError on fewer than 2 pairs or mismatched lengths.
PermutationTest sign_flip_test(std::span<const double> a, std::span<const double> b,
                               std::uint64_t monte_carlo_draws = 100000,
                               std::uint64_t seed = 0x5e1f);

}  // namespace hk
