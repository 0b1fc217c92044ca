// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic sequence tasks small enough to overfit on one core.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hk/losses.hpp"
#include "hk/model.hpp"

namespace hk {

enum class TaskKind { majority_class, noisy_parity, scalar_sum };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct TaskConfig {
  TaskKind kind = TaskKind::majority_class;
  std::size_t vocab_size = 32;
  std::size_t seq_len = 32;
  /// majority_class only; noisy_parity is binary and scalar_sum has one output.
  std::size_t num_classes = 4;
  std::size_t n_train = 256;
  std::size_t n_eval = 2048;
  double label_noise = 0.15;
  std::uint64_t data_seed = 7;

  /// ContractError on a vocabulary too small for the kind, η outside [0, 0.5),
  /// or empty splits.
  void validate() const;
  HeadKind head() const;
  std::size_t outputs() const;
  bool operator==(const TaskConfig&) const = default;
};

/// Token ids. Position 0 of every sequence holds kClsToken.
inline constexpr int kClsToken = 0;

struct Dataset {
  std::size_t seq_len = 0;
  std::vector<int> ids;  // size() * seq_len
  std::vector<int> classes;
  std::vector<double> values;

  std::size_t size() const { return seq_len == 0 ? 0 : ids.size() / seq_len; }
  TokenBatch batch(std::span<const std::size_t> rows) const;
  Targets targets(std::span<const std::size_t> rows) const;
};

struct SyntheticTask {
  TaskConfig config;
  Dataset train;  // labels carry the noise
  Dataset eval;   // clean labels
  std::vector<int> clean_train_classes;
  std::size_t noisy_labels = 0;
};

/// Draws both splits from one generator; no sequence appears twice.
///
///   majority_class  each non-CLS position is a class token (ids 1..C) with
///                   probability 1/2, otherwise a filler; label = the most
///                   frequent class token, ties redrawn.
///   noisy_parity    label = parity of the count of marked tokens (the lower
///                   half of the non-CLS ids).
///   scalar_sum      label = sum of per-token values in [-1, 1] over
///                   sqrt(seq_len - 1).
///
/// A fraction η of training labels is corrupted: classes move to a different
/// class uniformly, regression targets take another training example's value.
SyntheticTask make_task(const TaskConfig& config);

}  // namespace hk
