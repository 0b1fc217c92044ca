// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/analytic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <span>

#include "json.hpp"

#include "hk/dropout.hpp"
#include "hk/errors.hpp"
#include "hk/mask.hpp"
#include "hk/tensor.hpp"

namespace hk::analytic {
namespace {

bool is_masked(const LogitInstance& inst, std::size_t i) {
  return std::find(inst.masked.begin(), inst.masked.end(), i) != inst.masked.end();
}

// Max-shifted exponentials and the partial sums every closed form needs.
struct Sums {
  std::vector<double> e;
  double total = 0.0;             // S
  double kept = 0.0;              // S_kept
  double kept_without_u = 0.0;    // S_kept - exp(g_u), summed directly
  double total_without_u = 0.0;   // S - exp(g_u), summed directly
};

Sums sums(const LogitInstance& inst) {
  inst.validate();
  Sums s;
  const double shift = *std::max_element(inst.logits.begin(), inst.logits.end());
  s.e.resize(inst.logits.size());
  for (std::size_t i = 0; i < inst.logits.size(); ++i) {
    s.e[i] = std::exp(inst.logits[i] - shift);
    s.total += s.e[i];
    if (i != inst.probe) {
      s.total_without_u += s.e[i];
    }
    if (!is_masked(inst, i)) {
      s.kept += s.e[i];
      if (i != inst.probe) {
        s.kept_without_u += s.e[i];
      }
    }
  }
  return s;
}

MaskPlan instance_mask(const LogitInstance& inst) {
  MaskPlan mask = all_keep(1, inst.logits.size(), AxisSemantics::attention);
  for (std::size_t m : inst.masked) {
    mask.keep[m] = 0;
  }
  return mask;
}

std::vector<double> grad_of(const Tensor& root, Tensor& leaf) {
  leaf.zero_grad();
  backward(root);
  return leaf.grad();
}

}  // namespace

LogitInstance LogitInstance::single(std::vector<double> logits, std::size_t masked_index,
                                    std::size_t probe_index) {
  LogitInstance inst{std::move(logits), {masked_index}, probe_index};
  inst.validate();
  return inst;
}

void LogitInstance::validate() const {
  const std::size_t l = logits.size();
  if (l < 2) {
    throw ContractError("LogitInstance: need at least two logits");
  }
  if (masked.empty()) {
    throw ContractError("LogitInstance: no masked index");
  }
  if (probe >= l) {
    throw ContractError("LogitInstance: probe index out of range");
  }
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (masked[i] >= l || masked[i] == probe) {
      throw ContractError("LogitInstance: masked index out of range or equal to probe");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (masked[j] == masked[i]) {
        throw ContractError("LogitInstance: duplicate masked index");
      }
    }
  }
}

double wu_dropkey(const LogitInstance& inst) {
  const auto s = sums(inst);
  return s.e[inst.probe] / s.kept;
}

double wu_dropattention(const LogitInstance& inst) {
  const auto s = sums(inst);
  double surviving = 0.0;
  for (std::size_t i = 0; i < s.e.size(); ++i) {
    if (!is_masked(inst, i)) {
      surviving += s.e[i] / s.total;
    }
  }
  return (s.e[inst.probe] / s.total) / surviving;
}

double dwu_dgu_dropkey(const LogitInstance& inst) {
  const auto s = sums(inst);
  return s.e[inst.probe] * s.kept_without_u / (s.kept * s.kept);
}

double dwu_dgu_dropattention_ng(const LogitInstance& inst) {
  const auto s = sums(inst);
  return s.e[inst.probe] * s.total_without_u / (s.total * s.kept);
}

double dwu_dgm_dropattention_ng(const LogitInstance& inst) {
  return dwu_dgm_dropattention_ng(inst, inst.masked_index());
}

double dwu_dgm_dropattention_ng(const LogitInstance& inst, std::size_t masked_index) {
  if (!is_masked(inst, masked_index)) {
    throw ContractError("dwu_dgm_dropattention_ng: index is not masked");
  }
  const auto s = sums(inst);
  return -s.e[inst.probe] * s.e[masked_index] / (s.total * s.kept);
}

KRatio ratio_k(const LogitInstance& inst) {
  const auto s = sums(inst);
  KRatio k;
  if (s.kept_without_u == 0.0) {
    k.degenerate = true;
    k.value = 0.0;
    return k;
  }
  k.value = (s.kept_without_u / s.kept) * (s.total / s.total_without_u);
  return k;
}

EquivalenceReport verify_instance(const LogitInstance& inst,
                                  const std::vector<double>& loss_weights) {
  inst.validate();
  const std::size_t l = inst.logits.size();
  if (loss_weights.size() != l) {
    throw DimensionError("verify_instance: loss weights must match the row length");
  }
  const MaskPlan mask = instance_mask(inst);
  const std::span<const MaskPlan> masks(&mask, 1);
  Tensor g = Tensor::from({1, l}, inst.logits, true);
  const Tensor c = Tensor::from({1, l}, loss_weights);
  const int probe = static_cast<int>(inst.probe);

  const Tensor w_dk = softmax_row(drop_key(g, masks));
  const Tensor w_da_stop = drop_attention(softmax_row(g), masks, true);
  const Tensor w_da_flow = drop_attention(softmax_row(g), masks, false);

  EquivalenceReport r;
  for (std::size_t i = 0; i < l; ++i) {
    r.max_forward_diff = std::max({r.max_forward_diff, std::abs(w_dk[i] - w_da_stop[i]),
                                   std::abs(w_dk[i] - w_da_flow[i])});
  }

  auto probe_of = [&](const Tensor& w) { return sum(gather_last(w, std::span(&probe, 1))); };
  const auto grad_dk = grad_of(probe_of(w_dk), g);
  const auto grad_da_stop = grad_of(probe_of(w_da_stop), g);
  const auto grad_da_flow = grad_of(probe_of(w_da_flow), g);
  for (std::size_t i = 0; i < l; ++i) {
    r.max_backward_diff_no_gradstop =
        std::max(r.max_backward_diff_no_gradstop, std::abs(grad_dk[i] - grad_da_flow[i]));
  }

  const std::size_t u = inst.probe;
  double cf = std::abs(grad_dk[u] - dwu_dgu_dropkey(inst));
  cf = std::max(cf, std::abs(grad_da_stop[u] - dwu_dgu_dropattention_ng(inst)));
  for (std::size_t m : inst.masked) {
    cf = std::max(cf, std::abs(grad_dk[m] - dwu_dgm_dropkey(inst)));
    cf = std::max(cf, std::abs(grad_da_stop[m] - dwu_dgm_dropattention_ng(inst, m)));
  }
  r.max_closed_form_diff = cf;

  const auto k = ratio_k(inst);
  r.k_closed_form = k.value;
  r.k_degenerate = k.degenerate;
  r.k_empirical = grad_dk[u] / grad_da_stop[u];
  r.gm_grad_dropkey = grad_dk[inst.masked_index()];
  r.gm_grad_dropattention = grad_da_stop[inst.masked_index()];

  const auto loss_dk = grad_of(sum(mul(w_dk, c)), g);
  const auto loss_da = grad_of(sum(mul(w_da_stop, c)), g);
  r.loss_gm_grad_dropattention_min = std::numeric_limits<double>::infinity();
  const Tensor weights = softmax_row(detach(g));
  r.generic = true;
  for (std::size_t m : inst.masked) {
    r.loss_gm_grad_dropkey_max = std::max(r.loss_gm_grad_dropkey_max, std::abs(loss_dk[m]));
    r.loss_gm_grad_dropattention_min =
        std::min(r.loss_gm_grad_dropattention_min, std::abs(loss_da[m]));
    r.generic = r.generic && weights[m] >= 1e-7;
  }
  return r;
}

LogitInstance random_instance(Rng& rng, std::size_t length) {
  if (length < 2) {
    throw ContractError("random_instance: length must be >= 2");
  }
  LogitInstance inst;
  inst.logits.resize(length);
  for (auto& v : inst.logits) {
    v = rng.normal(0.0, 2.0);
  }
  std::vector<std::size_t> order(length);
  for (std::size_t i = 0; i < length; ++i) {
    order[i] = i;
  }
  // Fisher-Yates with our own draws so the instance stream is portable.
  for (std::size_t i = length - 1; i > 0; --i) {
    std::swap(order[i], order[rng.index(i + 1)]);
  }
  std::size_t n_masked = 1;
  if (length >= 3 && rng.bernoulli(0.5)) {
    n_masked = 2 + rng.index(length - 2);  // 2 .. l-1
  }
  inst.probe = order[0];
  inst.masked.assign(order.begin() + 1, order.begin() + 1 + static_cast<std::ptrdiff_t>(n_masked));
  inst.validate();
  return inst;
}

bool k_nonincreasing_in_gm(const LogitInstance& inst, std::size_t points, double half_width) {
  if (points < 2) {
    return true;
  }
  LogitInstance probe = inst;
  const std::size_t m = inst.masked_index();
  const double centre = inst.logits[m];
  double previous = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    probe.logits[m] = centre - half_width + 2.0 * half_width * t;
    const double k = ratio_k(probe).value;
    if (i > 0 && k > previous + 1e-14) {
      return false;
    }
    previous = k;
  }
  return true;
}

SuiteReport run_suite(const SuiteOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  SuiteReport report;
  report.min_dropattention_gm_grad = std::numeric_limits<double>::infinity();
  Rng rng(options.seed);
  for (std::size_t n = 0; n < options.instances; ++n) {
    const std::size_t length = options.lengths[n % options.lengths.size()];
    const LogitInstance inst = random_instance(rng, length);
    std::vector<double> c(length);
    for (auto& v : c) {
      v = 0.5 + rng.uniform();
    }
    const auto r = verify_instance(inst, c);
    ++report.instances;
    report.multi_mask_instances += inst.masked.size() > 1 ? 1 : 0;
    report.max_forward_diff = std::max(report.max_forward_diff, r.max_forward_diff);
    report.max_backward_diff_no_gradstop =
        std::max(report.max_backward_diff_no_gradstop, r.max_backward_diff_no_gradstop);
    report.max_closed_form_diff = std::max(report.max_closed_form_diff, r.max_closed_form_diff);
    report.max_k_diff = std::max(report.max_k_diff, std::abs(r.k_empirical - r.k_closed_form));
    report.min_k = std::min(report.min_k, r.k_closed_form);
    report.max_k = std::max(report.max_k, r.k_closed_form);
    report.degenerate_k += r.k_degenerate ? 1 : 0;
    if (!k_nonincreasing_in_gm(inst, options.sweep_points, options.sweep_half_width)) {
      ++report.k_sweep_violations;
    }
    report.max_dropkey_gm_grad = std::max(report.max_dropkey_gm_grad, r.loss_gm_grad_dropkey_max);
    if (r.generic) {
      ++report.generic_instances;
      report.min_dropattention_gm_grad =
          std::min(report.min_dropattention_gm_grad, r.loss_gm_grad_dropattention_min);
    }
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string SuiteReport::to_json() const {
  nlohmann::json j;
  j["instances"] = instances;
  j["multi_mask_instances"] = multi_mask_instances;
  j["generic_instances"] = generic_instances;
  j["degenerate_k"] = degenerate_k;
  j["max_forward_diff"] = max_forward_diff;
  j["max_backward_diff_no_gradstop"] = max_backward_diff_no_gradstop;
  j["max_closed_form_diff"] = max_closed_form_diff;
  j["max_k_diff"] = max_k_diff;
  j["min_k"] = min_k;
  j["max_k"] = max_k;
  j["k_sweep_violations"] = k_sweep_violations;
  j["max_dropkey_gm_grad"] = max_dropkey_gm_grad;
  j["min_dropattention_gm_grad"] = min_dropattention_gm_grad;
  j["seconds"] = seconds;
  j["checks"] = {{"forward_equivalence", forward_equivalence_ok()},
                 {"backward_equivalence", backward_equivalence_ok()},
                 {"ratio_k", ratio_ok()},
                 {"closed_forms", closed_forms_ok()},
                 {"gradient_noise", gradient_noise_ok()}};
  j["passed"] = all_ok();
  return j.dump(2);
}

}  // namespace hk::analytic
