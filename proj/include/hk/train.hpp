// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fixed-epoch training with periodic evaluation and best-eval checkpointing.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hk/config.hpp"
#include "hk/model.hpp"
#include "hk/task.hpp"

namespace hk {

struct RunRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;        // mean total loss over the epoch
  double train_metric = 0.0;      // inference-mode metric on the (noisy) train split
  double eval_metric = 0.0;       // inference-mode metric on the eval split
  double consistency_loss = 0.0;  // mean over the epoch
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds; 0 unless wall-time logging is on
  std::string status = "ok";

  bool operator==(const RunRecord&) const = default;
};

nlohmann::json to_json(const RunRecord& record);
/// ContractError unless every field is present with the right type.
RunRecord run_record_from_json(const nlohmann::json& j);
std::vector<RunRecord> read_metrics(const std::filesystem::path& path);

/// Accuracy for classifier heads, R^2 for regressor heads. Inference mode,
/// no graph.
double evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 256);

struct TrainOptions {
  /// Empty: nothing is written.
  std::filesystem::path out_dir;
  /// Defaults to <config hash>-s<seed>.
  std::string run_id;
};

struct TrainResult {
  std::vector<RunRecord> records;
  double best_eval = 0.0;
  std::size_t best_step = 0;
  bool aborted = false;
  std::string diagnostic;
  std::filesystem::path run_dir;

  const RunRecord& final_record() const { return records.back(); }
};

/// Trains `model` in place. Every random choice derives from `seed`: batch
/// order and the per-step mask seeds. With an output directory the records go
/// to <out>/<run_id>/metrics.jsonl as they are produced and the best-eval
/// parameters to <out>/<run_id>/best.ckpt. A non-finite loss stops training
/// with a final record whose status holds the diagnostic.
TrainResult train(Model& model, const ExperimentConfig& config, const SyntheticTask& task,
                  std::uint64_t seed, const TrainOptions& options = {});

/// Builds the model (adapter seed derived from `seed`) and trains it.
TrainResult train(const ExperimentConfig& config, const SyntheticTask& task, std::uint64_t seed,
                  const TrainOptions& options = {});

std::uint64_t adapter_seed_for(std::uint64_t seed);

}  // namespace hk
