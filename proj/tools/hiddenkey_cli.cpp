// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// hiddenkey: verify the analytic dropout identities, train, sweep, compare
// methods and export report tables.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hk/analytic.hpp"
#include "hk/config.hpp"
#include "hk/errors.hpp"
#include "hk/sweep.hpp"
#include "hk/train.hpp"

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first != std::string::npos) {
      out.push_back(item.substr(first, last - first + 1));
    }
  }
  return out;
}

int run_verify(std::size_t instances, std::uint64_t seed, const std::string& json_out) {
  hk::analytic::SuiteOptions options;
  options.instances = instances;
  options.seed = seed;
  const auto report = hk::analytic::run_suite(options);
  const std::string j = report.to_json();
  if (!json_out.empty()) {
    std::ofstream(json_out) << j << '\n';
  }
  std::cout << j << '\n';
  const bool ok = report.all_ok();
  std::cout << (ok ? "verify: all identities hold\n" : "verify: FAILED\n");
  return ok ? 0 : 1;
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out) {
  const auto config = hk::load_config(config_path);
  const auto task = hk::make_task(config.task);
  const std::uint64_t s = seed.value_or(config.seeds.front());
  const auto result = hk::train(config, task, s, {out, {}});
  const auto summary = hk::summarize(result);
  std::printf("run %s\n", result.run_dir.string().c_str());
  std::printf("best_eval %.6f at step %zu, final_eval %.6f, final_train %.6f\n",
              summary.best_eval, result.best_step, summary.final_eval, summary.final_train);
  if (result.aborted) {
    std::fprintf(stderr, "training aborted: %s\n", result.diagnostic.c_str());
    return 2;
  }
  return 0;
}

int run_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<double>& values, std::vector<std::uint64_t> seeds,
              const std::string& out, int workers) {
  hk::SweepSpec spec;
  spec.base = hk::load_config(config_path);
  spec.axis = hk::parse_axis(axis);
  spec.values = values;
  if (spec.values.empty()) {
    if (spec.axis != hk::SweepAxis::dropout_rate) {
      throw hk::ContractError("--values is required for axis " + axis);
    }
    spec.values = hk::kDefaultDropoutRates;
  }
  spec.seeds = seeds.empty() ? spec.base.seeds : std::move(seeds);
  const auto result = hk::sweep(spec, {out, workers});
  std::printf("%-12s %16s %12s %17s %18s\n", std::string(hk::to_string(spec.axis)).c_str(),
              "median_best_eval", "mad", "median_final_eval", "median_final_train");
  for (const auto& r : result.rows) {
    std::printf("%-12g %16.4f %12.4f %17.4f %18.4f\n", r.value, r.median_best_eval,
                r.mad_best_eval, r.median_final_eval, r.median_final_train);
  }
  return 0;
}

int run_compare(const std::string& config_path, const std::string& methods,
                std::vector<std::uint64_t> seeds, const std::string& out, int workers) {
  const auto base = hk::load_config(config_path);
  std::vector<hk::MethodBundle> bundles;
  for (const auto& name : split_list(methods)) {
    bundles.push_back(hk::method_bundle(name, base.methods));
  }
  const auto report =
      hk::compare_bundles(bundles, seeds.empty() ? base.seeds : seeds, base, {out, workers});
  std::printf("%-14s %16s %10s\n", "method", "median_best_eval", "mad");
  for (const auto& m : report.methods) {
    std::printf("%-14s %16.4f %10.4f\n", m.name.c_str(), m.median_best_eval, m.mad_best_eval);
  }
  std::printf("\n%-14s %-14s %12s %10s\n", "a", "b", "median_diff", "p_value");
  for (const auto& p : report.pairs) {
    std::printf("%-14s %-14s %12.4f %10.4f\n", p.a.c_str(), p.b.c_str(), p.median_difference,
                p.test.p_value);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured attention dropout experiments on a LoRA-adapted toy transformer"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify", "Check the DropKey/DropAttention identities");
  std::size_t instances = 1000;
  std::uint64_t verify_seed = hk::analytic::SuiteOptions{}.seed;
  std::string verify_json;
  verify->add_option("--instances", instances, "Random logit instances")->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_seed, "Instance generator seed");
  verify->add_option("--json", verify_json, "Also write the report to this file");

  auto* train = app.add_subcommand("train", "Train one run");
  std::string config_path;
  std::optional<std::uint64_t> train_seed;
  std::string out = "runs";
  train->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", train_seed, "Run seed (default: first seed in the config)");
  train->add_option("--out", out, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Train a grid over one axis");
  std::string axis;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  int workers = 0;
  sweep->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis, "rate, rank or kl_weight")
      ->required()
      ->check(CLI::IsMember({"rate", "dropout_rate", "rank", "lora_rank", "kl_weight"}));
  sweep->add_option("--values", values, "Axis values (rate default: 0.01 ... 0.3)")
      ->delimiter(',');
  sweep->add_option("--seeds", seeds, "Seeds (default: the config's)")->delimiter(',');
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--workers", workers, "Concurrent runs (default: OpenMP threads)");

  auto* compare = app.add_subcommand("compare", "Compare named methods over seeds");
  std::string methods = "baseline,dropkey,hiddencut,dropattention,hiddenkey-,hiddenkey";
  compare->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  compare->add_option("--methods", methods, "Comma-separated method names");
  compare->add_option("--seeds", seeds, "Seeds (default: the config's)")->delimiter(',');
  compare->add_option("--out", out, "Output directory");
  compare->add_option("--workers", workers, "Concurrent runs (default: OpenMP threads)");

  auto* report = app.add_subcommand("report", "Write CSV tables for a run, sweep or comparison");
  std::string run_dir;
  report->add_option("--run", run_dir, "Directory to summarize")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) {
      return run_verify(instances, verify_seed, verify_json);
    }
    if (*train) {
      return run_train(config_path, train_seed, out);
    }
    if (*sweep) {
      return run_sweep(config_path, axis, values, seeds, out, workers);
    }
    if (*compare) {
      return run_compare(config_path, methods, seeds, out, workers);
    }
    if (*report) {
      for (const auto& path : hk::write_report(run_dir)) {
        std::printf("%s\n", path.string().c_str());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
