// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Closed forms for one attention row under DropKey and DropAttention, used as
// oracles for the autodiff engine.
//
// Notation: g are the logits of one query row, M the masked key set (M[0] is
// "the" masked index m), u a surviving probe index, S = sum_i exp(g_i) and
// S_kept = sum_{i not in M} exp(g_i). All closed forms are evaluated from
// max-shifted exponentials, which leaves every ratio unchanged.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hk/rng.hpp"

namespace hk::analytic {

struct LogitInstance {
  std::vector<double> logits;
  std::vector<std::size_t> masked;  // non-empty, distinct, excludes probe
  std::size_t probe = 0;

  static LogitInstance single(std::vector<double> logits, std::size_t masked_index,
                              std::size_t probe_index);
  std::size_t masked_index() const { return masked.front(); }
  /// ContractError unless 0 <= m, u < l, u not masked and l >= 2.
  void validate() const;
};

/// exp(g_u) / S_kept.
double wu_dropkey(const LogitInstance& inst);
/// softmax(g)_u divided by the surviving softmax mass.
double wu_dropattention(const LogitInstance& inst);

/// d w'_u / d g_u under DropKey: exp(g_u) (S_kept - exp(g_u)) / S_kept^2.
double dwu_dgu_dropkey(const LogitInstance& inst);
/// d w'_u / d g_m under DropKey; the -inf fill severs g_m.
constexpr double dwu_dgm_dropkey(const LogitInstance&) { return 0.0; }
/// d w'_u / d g_u under DropAttention with a detached denominator:
/// exp(g_u) sum_{i != u} exp(g_i) / (S S_kept).
double dwu_dgu_dropattention_ng(const LogitInstance& inst);
/// d w'_u / d g_m under DropAttention with a detached denominator:
/// -exp(g_u) exp(g_m) / (S S_kept). Defaults to the first masked index.
double dwu_dgm_dropattention_ng(const LogitInstance& inst);
double dwu_dgm_dropattention_ng(const LogitInstance& inst, std::size_t masked_index);

struct KRatio {
  double value = 0.0;
  /// True when u is the only survivor; the numerator vanishes and value is 0.
  bool degenerate = false;
};

/// k = (1 - exp(g_u)/S_kept) / (1 - exp(g_u)/S), the factor relating the
/// DropKey and detached-DropAttention derivatives of w'_u by g_u.
KRatio ratio_k(const LogitInstance& inst);

struct EquivalenceReport {
  double max_forward_diff = 0.0;
  double max_backward_diff_no_gradstop = 0.0;
  /// Largest |autodiff - closed form| over the DropKey and detached
  /// DropAttention partials of w'_u.
  double max_closed_form_diff = 0.0;
  double k_closed_form = 0.0;
  double k_empirical = 0.0;
  bool k_degenerate = false;
  /// d w'_u / d g_m for m = M[0].
  double gm_grad_dropkey = 0.0;
  double gm_grad_dropattention = 0.0;
  /// d O / d g_m for O = sum_j c_j w'_j: the largest magnitude under DropKey
  /// and the smallest magnitude under detached DropAttention, over all m in M.
  double loss_gm_grad_dropkey_max = 0.0;
  double loss_gm_grad_dropattention_min = 0.0;
  /// Every masked softmax weight is at least 1e-7, so the detached
  /// DropAttention gradient into g_m is bounded away from round-off.
  bool generic = false;
};

/// Builds both paths through the autodiff engine and compares them with each
/// other and with the closed forms. `loss_weights` (length l) defines
/// O = sum_j c_j w'_j.
EquivalenceReport verify_instance(const LogitInstance& inst,
                                  const std::vector<double>& loss_weights);

/// Logits ~ Normal(0, 2^2); one masked index, or with probability 1/2 (when
/// l >= 3) between 2 and l - 1 masked indices; probe uniform over survivors.
LogitInstance random_instance(Rng& rng, std::size_t length);

struct SuiteOptions {
  std::size_t instances = 1000;
  std::uint64_t seed = 20240601;
  std::vector<std::size_t> lengths = {2, 3, 4, 8, 16, 32};
  std::size_t sweep_points = 100;
  double sweep_half_width = 10.0;
};

struct SuiteReport {
  std::size_t instances = 0;
  std::size_t multi_mask_instances = 0;
  std::size_t generic_instances = 0;
  std::size_t degenerate_k = 0;
  double max_forward_diff = 0.0;
  double max_backward_diff_no_gradstop = 0.0;
  double max_closed_form_diff = 0.0;
  double max_k_diff = 0.0;
  double min_k = 1.0;
  double max_k = 0.0;
  std::size_t k_sweep_violations = 0;
  double max_dropkey_gm_grad = 0.0;
  double min_dropattention_gm_grad = 0.0;  // over generic instances
  double seconds = 0.0;

  bool forward_equivalence_ok(double tol = 1e-12) const { return max_forward_diff <= tol; }
  bool backward_equivalence_ok(double tol = 1e-10) const {
    return max_backward_diff_no_gradstop <= tol;
  }
  bool ratio_ok(double tol = 1e-10) const {
    return max_k_diff <= tol && min_k >= 0.0 && max_k < 1.0 && k_sweep_violations == 0;
  }
  bool closed_forms_ok(double tol = 1e-10) const { return max_closed_form_diff <= tol; }
  bool gradient_noise_ok(double threshold = 1e-8) const {
    return max_dropkey_gm_grad == 0.0 && min_dropattention_gm_grad > threshold;
  }
  bool all_ok() const {
    return forward_equivalence_ok() && backward_equivalence_ok() && ratio_ok() &&
           closed_forms_ok() && gradient_noise_ok();
  }
  std::string to_json() const;
};

/// True when ratio_k is non-increasing along an evenly spaced sweep of g_m
/// over [g_m - half_width, g_m + half_width]. Steps may rise by at most 1e-14
/// of round-off.
bool k_nonincreasing_in_gm(const LogitInstance& inst, std::size_t points, double half_width);

/// The randomized certification behind the `verify` command.
SuiteReport run_suite(const SuiteOptions& options);

}  // namespace hk::analytic
