// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration as one JSON document, and the named method bundles
// the comparison command trains.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hk/dropout.hpp"
#include "hk/losses.hpp"
#include "hk/model.hpp"
#include "hk/task.hpp"

namespace hk {

struct ArchitectureConfig {
  std::size_t num_layers = 4;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t d_ff = 256;
  std::size_t lora_rank = 8;
  double lora_alpha = 16.0;
  std::uint64_t backbone_seed = 0x5eedba5eULL;
  bool operator==(const ArchitectureConfig&) const = default;
};

struct OptimizerConfig {
  double learning_rate = 3e-3;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double warmup_ratio = 0.06;
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  std::size_t eval_every = 5;  // epochs
  bool operator==(const OptimizerConfig&) const = default;
};

/// Rates the compare command plugs into the named methods.
struct MethodRates {
  double attn_rate = 0.1;
  double ffn_rate = 0.1;
  double kl_weight = 1.0;
  bool operator==(const MethodRates&) const = default;
};

struct ExperimentConfig {
  ArchitectureConfig model;
  TaskConfig task;
  std::vector<DropoutSpec> dropout_specs;
  CompensationSpec compensation;
  OptimizerConfig optimizer;
  MethodRates methods;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  /// Off by default: a real clock would break bit-identical metrics files.
  bool log_wall_time = false;

  /// ContractError on any inconsistency, including the model it implies.
  void validate() const;
  /// The model this experiment trains; vocabulary, length and head come from
  /// the task.
  ModelConfig model_config() const;
  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const DropoutSpec& spec);
DropoutSpec dropout_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CompensationSpec& spec);
CompensationSpec compensation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys are a ContractError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the canonical (sorted-key) JSON dump.
std::string config_hash(const ExperimentConfig& config);

struct MethodBundle {
  std::string name;
  std::vector<DropoutSpec> specs;
  CompensationSpec compensation;
  bool operator==(const MethodBundle&) const = default;
};

/// Column DropKey on the logits, element HiddenCut in the feed-forward
/// module, and bidirectional KL of weight `kl_weight`. kl_weight = 0 gives
/// compensation kind none.
MethodBundle hiddenkey_bundle(double rate_attn, double rate_ffn, double kl_weight);

/// baseline, dropkey, hiddencut, dropattention (column, gradient-stopped
/// denominator), hiddenkey- or hiddenkey, at the given rates.
MethodBundle method_bundle(std::string_view name, const MethodRates& rates);

/// The config with the bundle's dropout and compensation swapped in.
ExperimentConfig with_bundle(ExperimentConfig config, const MethodBundle& bundle);

nlohmann::json to_json(const MethodBundle& bundle);
MethodBundle bundle_from_json(const nlohmann::json& j);

}  // namespace hk
