// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Task losses, the consistency measures, and the twin-pass training step.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hk/model.hpp"
#include "hk/tensor.hpp"

namespace hk {

/// Probabilities are clamped to this floor before any logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

enum class CompensationKind { none, kl_bidirectional, js_to_inference };

std::string_view to_string(CompensationKind kind);
CompensationKind parse_compensation(std::string_view text);

struct CompensationSpec {
  CompensationKind kind = CompensationKind::none;
  double weight = 0.0;

  bool active() const { return kind != CompensationKind::none && weight > 0.0; }
  bool operator==(const CompensationSpec&) const = default;
};

/// D_KL(p || q) with both sides clamped.
double kl_divergence(std::span<const double> p, std::span<const double> q);
/// (D_KL(p1 || p2) + D_KL(p2 || p1)) / 2.
double kl_bidirectional(std::span<const double> p1, std::span<const double> p2);
/// D_KL(p_train || p_infer).
double js_to_inference(std::span<const double> p_train, std::span<const double> p_infer);

/// Row-wise bidirectional KL of [B, C] distributions, averaged over rows.
Tensor kl_bidirectional(const Tensor& p1, const Tensor& p2);
/// Row-wise D_KL(p_train || p_infer) averaged over rows; p_infer is detached.
Tensor js_to_inference(const Tensor& p_train, const Tensor& p_infer);
/// Mean over the batch of the squared Euclidean distance between rows.
Tensor mean_squared_distance(const Tensor& a, const Tensor& b);

struct Targets {
  std::vector<int> classes;    // classifier heads
  std::vector<double> values;  // regressor heads
};

/// Mean of -log(max(p[y], floor)).
Tensor cross_entropy(const Tensor& probabilities, std::span<const int> classes);
/// Mean of (prediction - target)^2.
Tensor mean_squared_error(const Tensor& predictions, std::span<const double> targets);
Tensor task_loss(const Tensor& head_output, const Targets& targets, HeadKind head);

struct TwinPassOptions {
  /// Draw both branches from the same masks (the consistency term is then 0).
  bool share_masks = false;
  /// Keep the graph of branch 2 alive (it is still detached from the loss).
  bool track_branch2_graph = false;
};

struct TwinPassResult {
  double task_loss = 0.0;
  double consistency_loss = 0.0;
  double total_loss = 0.0;
  /// Branch 1 carries the task loss and the only backward edge.
  Tensor p1;
  /// Branch 2 output before detaching (distribution or pooled representation).
  Tensor p2;
  std::size_t forward_passes = 0;
};

/// One training step's forward and backward.
///
/// Branch 1 runs in train mode and carries the task loss. For
/// kl_bidirectional branch 2 is a second train-mode pass with fresh masks; for
/// js_to_inference it is an inference pass. Branch 2 is detached, and the
/// total task + weight * consistency is backpropagated through branch 1 only.
/// Classifier heads compare output distributions; regressor heads compare the
/// pooled last-layer representations by mean squared distance. Without an
/// active compensation only branch 1 runs.
TwinPassResult twin_pass_step(const Model& model, const TokenBatch& batch, const Targets& targets,
                              const CompensationSpec& compensation, std::uint64_t step_seed,
                              const TwinPassOptions& options = {});

}  // namespace hk
