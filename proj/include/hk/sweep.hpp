// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Grids of training runs: one-axis sweeps and multi-method comparisons with
// paired significance tests over seeds.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hk/config.hpp"
#include "hk/stats.hpp"
#include "hk/train.hpp"

namespace hk {

enum class SweepAxis { dropout_rate, lora_rank, kl_weight };

/// Dropout-rate grid used when a rate sweep names no values.
inline const std::vector<double> kDefaultDropoutRates = {0.01, 0.02, 0.05, 0.1,
                                                         0.15, 0.2,  0.25, 0.3};

std::string_view to_string(SweepAxis axis);
/// Accepts "rate" / "dropout_rate", "rank" / "lora_rank" and "kl_weight".
SweepAxis parse_axis(std::string_view text);

struct SweepSpec {
  SweepAxis axis = SweepAxis::dropout_rate;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  ExperimentConfig base;

  /// ContractError on empty values or seeds, or a value the axis cannot take.
  void validate() const;
};

/// The base config with one axis set.
///
///   dropout_rate  every dropout spec takes the rate (ContractError if none).
///   lora_rank     the adapter rank; alpha is left unchanged.
///   kl_weight     the compensation weight; kind none becomes kl_bidirectional.
ExperimentConfig apply_axis(ExperimentConfig config, SweepAxis axis, double value);

struct RunSummary {
  double best_eval = 0.0;
  double final_eval = 0.0;
  double final_train = 0.0;
  double peak_to_final_drop = 0.0;
  double final_consistency = 0.0;
  bool aborted = false;
};

RunSummary summarize(const TrainResult& result);

struct GridOptions {
  /// Empty: runs write nothing.
  std::filesystem::path out_dir;
  /// Cells trained concurrently; 0 uses the OpenMP default.
  int workers = 0;
};

struct SweepCell {
  double value = 0.0;
  std::uint64_t seed = 0;
  RunSummary summary;
};

struct SweepRow {
  double value = 0.0;
  double median_best_eval = 0.0;
  double mad_best_eval = 0.0;
  double median_final_eval = 0.0;
  double median_final_train = 0.0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::dropout_rate;
  std::vector<SweepCell> cells;  // value-major
  std::vector<SweepRow> rows;    // one per value, in input order

  nlohmann::json to_json() const;
};

/// Trains every (value, seed) cell and aggregates medians over seeds. Cells
/// are independent and each one is single-threaded, so the result does not
/// depend on the worker count.
SweepResult sweep(const SweepSpec& spec, const GridOptions& options = {});

struct MethodSummary {
  std::string name;
  std::vector<double> best_evals;  // seed order
  std::vector<double> final_evals;
  std::vector<double> final_trains;
  double median_best_eval = 0.0;
  double mad_best_eval = 0.0;
};

struct PairwiseComparison {
  std::string a;
  std::string b;
  double median_difference = 0.0;  // median over seeds of a - b
  PermutationTest test;
};

struct CompareReport {
  std::vector<MethodSummary> methods;
  std::vector<PairwiseComparison> pairs;  // every a before b in input order

  const MethodSummary& method(std::string_view name) const;
  nlohmann::json to_json() const;
};

/// Paired comparison of best-eval metrics. Needs at least two distinct
/// bundles and two seeds (ContractError otherwise).
CompareReport compare_bundles(const std::vector<MethodBundle>& bundles,
                              const std::vector<std::uint64_t>& seeds,
                              const ExperimentConfig& base, const GridOptions& options = {});

/// Pairs every method from already-collected per-seed metrics.
CompareReport compare_summaries(std::vector<MethodSummary> methods);

/// Writes CSV tables for plotting. A run directory (metrics.jsonl) yields
/// curves.csv and summary.csv; a sweep.json or compare.json in the directory
/// yields sweep.csv or compare.csv and pvalues.csv. Returns the files written.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir);

}  // namespace hk
