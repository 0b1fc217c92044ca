// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hk/errors.hpp"
#include "hk/rng.hpp"

namespace hk {

double median(std::span<const double> values) {
  if (values.empty()) {
    throw ContractError("median of an empty sample");
  }
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double median_absolute_deviation(std::span<const double> values) {
  const double m = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double x : values) {
    dev.push_back(std::abs(x - m));
  }
  return median(dev);
}

PermutationTest sign_flip_test(std::span<const double> a, std::span<const double> b,
                               std::uint64_t monte_carlo_draws, std::uint64_t seed) {
  if (a.size() != b.size()) {
    throw ContractError("sign_flip_test: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + " paired values");
  }
  const std::size_t n = a.size();
  if (n < 2) {
    throw ContractError("sign_flip_test: need at least 2 paired seeds");
  }
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
  }
  double observed = 0.0;
  for (double x : d) {
    observed += x;
  }
  // Compare sums, not means, and allow rounding slack so ties count.
  const double threshold = std::abs(observed) * (1.0 - 1e-12) - 1e-15;

  PermutationTest out;
  out.mean_difference = observed / static_cast<double>(n);
  std::uint64_t hits = 0;
  if (n <= 20) {
    out.exact = true;
    out.permutations = std::uint64_t{1} << n;
    for (std::uint64_t signs = 0; signs < out.permutations; ++signs) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += (signs >> i) & 1U ? -d[i] : d[i];
      }
      hits += std::abs(s) >= threshold ? 1 : 0;
    }
  } else {
    out.exact = false;
    out.permutations = monte_carlo_draws + 1;
    hits = 1;  // the observed assignment
    Rng rng(seed);
    for (std::uint64_t k = 0; k < monte_carlo_draws; ++k) {
      double s = 0.0;
      for (double x : d) {
        s += rng.bernoulli(0.5) ? -x : x;
      }
      hits += std::abs(s) >= threshold ? 1 : 0;
    }
  }
  out.p_value = static_cast<double>(hits) / static_cast<double>(out.permutations);
  return out;
}

}  // namespace hk
