// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/losses.hpp"

#include <cmath>
#include <string>

#include "hk/errors.hpp"
#include "hk/rng.hpp"

namespace hk {
namespace {

void check_distribution(const char* op, std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) {
      throw ContractError(std::string(op) + ": negative or NaN probability");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractError(std::string(op) + ": probabilities sum to " + std::to_string(total));
  }
}

void check_pair(const char* op, std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw ContractError(std::string(op) + ": distributions of different length");
  }
  check_distribution(op, p);
  check_distribution(op, q);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

// Per-row D_KL(p || q) as a [rows, 1] tensor.
Tensor row_kl(const Tensor& p, const Tensor& q) {
  const Tensor log_p = log(clamp_min(p, kProbabilityFloor));
  const Tensor log_q = log(clamp_min(q, kProbabilityFloor));
  return sum_last(mul(p, sub(log_p, log_q)));
}

}  // namespace

std::string_view to_string(CompensationKind kind) {
  switch (kind) {
    case CompensationKind::none:
      return "none";
    case CompensationKind::kl_bidirectional:
      return "kl_bidirectional";
    case CompensationKind::js_to_inference:
      return "js_to_inference";
  }
  return "none";
}

CompensationKind parse_compensation(std::string_view text) {
  for (auto k : {CompensationKind::none, CompensationKind::kl_bidirectional,
                 CompensationKind::js_to_inference}) {
    if (to_string(k) == text) {
      return k;
    }
  }
  throw ContractError("unknown compensation kind '" + std::string(text) + "'");
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_pair("kl_divergence", p, q);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p[i], kProbabilityFloor);
    const double qi = std::max(q[i], kProbabilityFloor);
    total += p[i] * (std::log(pi) - std::log(qi));
  }
  return total;
}

double kl_bidirectional(std::span<const double> p1, std::span<const double> p2) {
  return 0.5 * (kl_divergence(p1, p2) + kl_divergence(p2, p1));
}

double js_to_inference(std::span<const double> p_train, std::span<const double> p_infer) {
  return kl_divergence(p_train, p_infer);
}

Tensor kl_bidirectional(const Tensor& p1, const Tensor& p2) {
  check_same_shape("kl_bidirectional", p1, p2);
  return scale(mean(add(row_kl(p1, p2), row_kl(p2, p1))), 0.5);
}

Tensor js_to_inference(const Tensor& p_train, const Tensor& p_infer) {
  check_same_shape("js_to_inference", p_train, p_infer);
  return mean(row_kl(p_train, detach(p_infer)));
}

Tensor mean_squared_distance(const Tensor& a, const Tensor& b) {
  check_same_shape("mean_squared_distance", a, b);
  const Tensor diff = sub(a, b);
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(a.dim(0)));
}

Tensor cross_entropy(const Tensor& probabilities, std::span<const int> classes) {
  const Tensor picked = gather_last(probabilities, classes);
  return scale(mean(log(clamp_min(picked, kProbabilityFloor))), -1.0);
}

Tensor mean_squared_error(const Tensor& predictions, std::span<const double> targets) {
  if (predictions.numel() != targets.size()) {
    throw ContractError("mean_squared_error: " + std::to_string(targets.size()) +
                        " targets for " + shape_str(predictions.shape()));
  }
  const Tensor diff = sub(predictions, Tensor::from(predictions.shape(),
                                                    std::vector<double>(targets.begin(), targets.end())));
  return mean(mul(diff, diff));
}

Tensor task_loss(const Tensor& head_output, const Targets& targets, HeadKind head) {
  if (head == HeadKind::classifier) {
    return cross_entropy(head_output, targets.classes);
  }
  return mean_squared_error(head_output, targets.values);
}

TwinPassResult twin_pass_step(const Model& model, const TokenBatch& batch, const Targets& targets,
                              const CompensationSpec& compensation, std::uint64_t step_seed,
                              const TwinPassOptions& options) {
  const HeadKind head = model.config().head;
  const std::uint64_t seed1 = derive_seed({step_seed, 1});
  const std::uint64_t seed2 = options.share_masks ? seed1 : derive_seed({step_seed, 2});

  TwinPassResult result;
  const ForwardTrace branch1 = model.forward(batch, {Mode::train, seed1, false, {}});
  result.forward_passes = 1;
  const Tensor task = task_loss(branch1.output, targets, head);
  Tensor total = task;
  result.task_loss = task.item();

  const bool regression = head == HeadKind::regressor;
  result.p1 = regression ? branch1.pooled : branch1.output;
  if (compensation.active()) {
    const Mode mode2 =
        compensation.kind == CompensationKind::js_to_inference ? Mode::infer : Mode::train;
    ForwardTrace branch2;
    if (options.track_branch2_graph) {
      branch2 = model.forward(batch, {mode2, seed2, false, {}});
    } else {
      NoGradGuard no_grad;
      branch2 = model.forward(batch, {mode2, seed2, false, {}});
    }
    result.forward_passes = 2;
    result.p2 = regression ? branch2.pooled : branch2.output;
    const Tensor reference = detach(result.p2);
    Tensor consistency;
    if (regression) {
      consistency = mean_squared_distance(result.p1, reference);
    } else if (compensation.kind == CompensationKind::kl_bidirectional) {
      consistency = kl_bidirectional(result.p1, reference);
    } else {
      consistency = js_to_inference(result.p1, reference);
    }
    result.consistency_loss = consistency.item();
    total = add(task, scale(consistency, compensation.weight));
  }
  result.total_loss = total.item();
  if (!std::isfinite(result.total_loss)) {
    throw NumericError("twin_pass_step: non-finite loss " + std::to_string(result.total_loss));
  }
  backward(total);
  return result;
}

}  // namespace hk
