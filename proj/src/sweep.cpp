// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/sweep.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>

#include "hk/errors.hpp"

namespace hk {
namespace {

using nlohmann::json;

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

int worker_count(const GridOptions& options) {
  return options.workers > 0 ? options.workers : omp_get_max_threads();
}

// Runs fn(i) for every cell on a bounded pool and rethrows the first failure.
template <typename Fn>
void run_cells(std::size_t count, const GridOptions& options, Fn fn) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(worker_count(options))
  for (std::size_t i = 0; i < count; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical(hk_grid_failure)
      if (!failure) {
        failure = std::current_exception();
      }
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

std::ofstream open_csv(const std::filesystem::path& path,
                       std::vector<std::filesystem::path>& written) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out.precision(17);
  written.push_back(path);
  return out;
}

json summary_json(const RunSummary& s) {
  return {{"best_eval", s.best_eval},
          {"final_eval", s.final_eval},
          {"final_train", s.final_train},
          {"peak_to_final_drop", s.peak_to_final_drop},
          {"final_consistency", s.final_consistency},
          {"aborted", s.aborted}};
}

}  // namespace

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::dropout_rate:
      return "dropout_rate";
    case SweepAxis::lora_rank:
      return "lora_rank";
    case SweepAxis::kl_weight:
      return "kl_weight";
  }
  return "dropout_rate";
}

SweepAxis parse_axis(std::string_view text) {
  if (text == "rate" || text == "dropout_rate") {
    return SweepAxis::dropout_rate;
  }
  if (text == "rank" || text == "lora_rank") {
    return SweepAxis::lora_rank;
  }
  if (text == "kl_weight") {
    return SweepAxis::kl_weight;
  }
  throw ContractError("unknown sweep axis '" + std::string(text) + "' (rate, rank, kl_weight)");
}

ExperimentConfig apply_axis(ExperimentConfig config, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::dropout_rate:
      if (config.dropout_specs.empty()) {
        throw ContractError("rate sweep needs at least one dropout spec in the config");
      }
      for (auto& s : config.dropout_specs) {
        s.rate = value;
      }
      break;
    case SweepAxis::lora_rank:
      if (!(value >= 1.0) || value != std::floor(value)) {
        throw ContractError("lora_rank must be a positive integer, got " + format_value(value));
      }
      config.model.lora_rank = static_cast<std::size_t>(value);
      break;
    case SweepAxis::kl_weight:
      if (config.compensation.kind == CompensationKind::none) {
        config.compensation.kind = CompensationKind::kl_bidirectional;
      }
      config.compensation.weight = value;
      break;
  }
  config.validate();
  return config;
}

void SweepSpec::validate() const {
  if (values.empty() || seeds.empty()) {
    throw ContractError("sweep needs at least one value and one seed");
  }
  for (double v : values) {
    apply_axis(base, axis, v);
  }
}

RunSummary summarize(const TrainResult& result) {
  RunSummary s;
  s.aborted = result.aborted;
  s.best_eval = result.best_eval;
  for (auto it = result.records.rbegin(); it != result.records.rend(); ++it) {
    if (it->status == "ok") {
      s.final_eval = it->eval_metric;
      s.final_train = it->train_metric;
      s.final_consistency = it->consistency_loss;
      break;
    }
  }
  s.peak_to_final_drop = s.best_eval - s.final_eval;
  return s;
}

json SweepResult::to_json() const {
  json cells_json = json::array();
  for (const auto& c : cells) {
    cells_json.push_back({{"value", c.value}, {"seed", c.seed}, {"summary", summary_json(c.summary)}});
  }
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"value", r.value},
                         {"median_best_eval", r.median_best_eval},
                         {"mad_best_eval", r.mad_best_eval},
                         {"median_final_eval", r.median_final_eval},
                         {"median_final_train", r.median_final_train}});
  }
  return {{"axis", hk::to_string(axis)}, {"cells", cells_json}, {"rows", rows_json}};
}

SweepResult sweep(const SweepSpec& spec, const GridOptions& options) {
  spec.validate();
  const SyntheticTask task = make_task(spec.base.task);
  SweepResult result;
  result.axis = spec.axis;
  const std::size_t S = spec.seeds.size();
  result.cells.resize(spec.values.size() * S);

  run_cells(result.cells.size(), options, [&](std::size_t i) {
    const double value = spec.values[i / S];
    const std::uint64_t seed = spec.seeds[i % S];
    const ExperimentConfig config = apply_axis(spec.base, spec.axis, value);
    TrainOptions topts;
    if (!options.out_dir.empty()) {
      topts.out_dir = options.out_dir;
      topts.run_id = std::string(hk::to_string(spec.axis)) + "-" + format_value(value) + "-s" +
                     std::to_string(seed);
    }
    result.cells[i] = {value, seed, summarize(train(config, task, seed, topts))};
  });

  for (std::size_t v = 0; v < spec.values.size(); ++v) {
    std::vector<double> best, final_eval, final_train;
    for (std::size_t s = 0; s < S; ++s) {
      const auto& c = result.cells[v * S + s].summary;
      best.push_back(c.best_eval);
      final_eval.push_back(c.final_eval);
      final_train.push_back(c.final_train);
    }
    result.rows.push_back({spec.values[v], median(best), median_absolute_deviation(best),
                           median(final_eval), median(final_train)});
  }
  if (!options.out_dir.empty()) {
    write_json(options.out_dir / "sweep.json", result.to_json());
  }
  return result;
}

const MethodSummary& CompareReport::method(std::string_view name) const {
  for (const auto& m : methods) {
    if (m.name == name) {
      return m;
    }
  }
  throw ContractError("no method named '" + std::string(name) + "' in the report");
}

json CompareReport::to_json() const {
  json ms = json::array();
  for (const auto& m : methods) {
    ms.push_back({{"name", m.name},
                  {"best_evals", m.best_evals},
                  {"final_evals", m.final_evals},
                  {"final_trains", m.final_trains},
                  {"median_best_eval", m.median_best_eval},
                  {"mad_best_eval", m.mad_best_eval}});
  }
  json ps = json::array();
  for (const auto& p : pairs) {
    ps.push_back({{"a", p.a},
                  {"b", p.b},
                  {"median_difference", p.median_difference},
                  {"mean_difference", p.test.mean_difference},
                  {"p_value", p.test.p_value},
                  {"permutations", p.test.permutations},
                  {"exact", p.test.exact}});
  }
  return {{"methods", ms}, {"pairs", ps}};
}

CompareReport compare_summaries(std::vector<MethodSummary> methods) {
  if (methods.size() < 2) {
    throw ContractError("compare needs at least two methods");
  }
  CompareReport report;
  for (auto& m : methods) {
    m.median_best_eval = median(m.best_evals);
    m.mad_best_eval = median_absolute_deviation(m.best_evals);
  }
  report.methods = std::move(methods);
  const auto& ms = report.methods;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    for (std::size_t j = i + 1; j < ms.size(); ++j) {
      PairwiseComparison p;
      p.a = ms[i].name;
      p.b = ms[j].name;
      p.test = sign_flip_test(ms[i].best_evals, ms[j].best_evals);
      std::vector<double> diff(ms[i].best_evals.size());
      for (std::size_t k = 0; k < diff.size(); ++k) {
        diff[k] = ms[i].best_evals[k] - ms[j].best_evals[k];
      }
      p.median_difference = median(diff);
      report.pairs.push_back(std::move(p));
    }
  }
  return report;
}

CompareReport compare_bundles(const std::vector<MethodBundle>& bundles,
                              const std::vector<std::uint64_t>& seeds,
                              const ExperimentConfig& base, const GridOptions& options) {
  if (bundles.size() < 2) {
    throw ContractError("compare needs at least two methods");
  }
  if (seeds.size() < 2) {
    throw ContractError("compare needs at least two seeds");
  }
  const SyntheticTask task = make_task(base.task);
  const std::size_t S = seeds.size();
  std::vector<RunSummary> cells(bundles.size() * S);
  run_cells(cells.size(), options, [&](std::size_t i) {
    const auto& bundle = bundles[i / S];
    const std::uint64_t seed = seeds[i % S];
    TrainOptions topts;
    if (!options.out_dir.empty()) {
      topts.out_dir = options.out_dir;
      topts.run_id = bundle.name + "-s" + std::to_string(seed);
    }
    cells[i] = summarize(train(with_bundle(base, bundle), task, seed, topts));
  });

  std::vector<MethodSummary> methods;
  for (std::size_t m = 0; m < bundles.size(); ++m) {
    MethodSummary s;
    s.name = bundles[m].name;
    for (std::size_t k = 0; k < S; ++k) {
      const auto& c = cells[m * S + k];
      s.best_evals.push_back(c.best_eval);
      s.final_evals.push_back(c.final_eval);
      s.final_trains.push_back(c.final_train);
    }
    methods.push_back(std::move(s));
  }
  auto report = compare_summaries(std::move(methods));
  if (!options.out_dir.empty()) {
    write_json(options.out_dir / "compare.json", report.to_json());
  }
  return report;
}

std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  if (std::filesystem::exists(dir / "metrics.jsonl")) {
    const auto records = read_metrics(dir / "metrics.jsonl");
    auto curves = open_csv(dir / "curves.csv", written);
    curves << "step,epoch,train_loss,train_metric,eval_metric,consistency_loss,wall_time,status\n";
    double best = -INFINITY;
    std::size_t best_step = 0;
    const RunRecord* last = nullptr;
    for (const auto& r : records) {
      curves << r.step << ',' << r.epoch << ',' << r.train_loss << ',' << r.train_metric << ','
             << r.eval_metric << ',' << r.consistency_loss << ',' << r.wall_time << ','
             << r.status << '\n';
      if (r.status == "ok") {
        last = &r;
        if (r.eval_metric > best) {
          best = r.eval_metric;
          best_step = r.step;
        }
      }
    }
    auto summary = open_csv(dir / "summary.csv", written);
    summary << "config_hash,seed,records,best_eval,best_step,final_eval,final_train,"
               "peak_to_final_drop\n";
    if (last != nullptr) {
      summary << last->config_hash << ',' << last->seed << ',' << records.size() << ',' << best
              << ',' << best_step << ',' << last->eval_metric << ',' << last->train_metric << ','
              << best - last->eval_metric << '\n';
    }
  }
  if (std::filesystem::exists(dir / "sweep.json")) {
    std::ifstream in(dir / "sweep.json");
    const auto j = json::parse(in);
    auto table = open_csv(dir / "sweep.csv", written);
    table << j.at("axis").get<std::string>()
          << ",median_best_eval,mad_best_eval,median_final_eval,median_final_train\n";
    for (const auto& r : j.at("rows")) {
      table << r.at("value").get<double>() << ',' << r.at("median_best_eval").get<double>() << ','
            << r.at("mad_best_eval").get<double>() << ','
            << r.at("median_final_eval").get<double>() << ','
            << r.at("median_final_train").get<double>() << '\n';
    }
  }
  if (std::filesystem::exists(dir / "compare.json")) {
    std::ifstream in(dir / "compare.json");
    const auto j = json::parse(in);
    auto table = open_csv(dir / "compare.csv", written);
    table << "method,median_best_eval,mad_best_eval,best_evals\n";
    for (const auto& m : j.at("methods")) {
      table << m.at("name").get<std::string>() << ',' << m.at("median_best_eval").get<double>()
            << ',' << m.at("mad_best_eval").get<double>() << ',';
      const auto& evals = m.at("best_evals");
      for (std::size_t k = 0; k < evals.size(); ++k) {
        table << (k ? ";" : "") << evals[k].get<double>();
      }
      table << '\n';
    }
    auto pvalues = open_csv(dir / "pvalues.csv", written);
    pvalues << "a,b,median_difference,mean_difference,p_value,permutations\n";
    for (const auto& p : j.at("pairs")) {
      pvalues << p.at("a").get<std::string>() << ',' << p.at("b").get<std::string>() << ','
              << p.at("median_difference").get<double>() << ','
              << p.at("mean_difference").get<double>() << ',' << p.at("p_value").get<double>()
              << ',' << p.at("permutations").get<std::uint64_t>() << '\n';
    }
  }
  if (written.empty()) {
    throw ContractError("nothing to report in " + dir.string() +
                        " (expected metrics.jsonl, sweep.json or compare.json)");
  }
  return written;
}

}  // namespace hk
