// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "hk/errors.hpp"
#include "hk/losses.hpp"
#include "hk/optim.hpp"
#include "hk/rng.hpp"

namespace hk {
namespace {

using nlohmann::json;

// Parameter values at the best evaluation so far.
using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const std::vector<NamedParameter>& params) {
  Snapshot s;
  s.reserve(params.size());
  for (const auto& p : params) {
    s.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  }
  return s;
}

void restore(const std::vector<NamedParameter>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = Tensor(params[i].tensor).mutable_values();
    std::copy(s[i].begin(), s[i].end(), dst.begin());
  }
}

}  // namespace

json to_json(const RunRecord& r) {
  return {{"step", r.step},
          {"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"train_metric", r.train_metric},
          {"eval_metric", r.eval_metric},
          {"consistency_loss", r.consistency_loss},
          {"config_hash", r.config_hash},
          {"seed", r.seed},
          {"wall_time", r.wall_time},
          {"status", r.status}};
}

RunRecord run_record_from_json(const json& j) {
  try {
    RunRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.train_metric = j.at("train_metric").get<double>();
    r.eval_metric = j.at("eval_metric").get<double>();
    r.consistency_loss = j.at("consistency_loss").get<double>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_time = j.at("wall_time").get<double>();
    r.status = j.at("status").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ContractError(std::string("incomplete run record: ") + e.what());
  }
}

std::vector<RunRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open metrics file " + path.string());
  }
  std::vector<RunRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      out.push_back(run_record_from_json(json::parse(line)));
    }
  }
  return out;
}

double evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  NoGradGuard no_grad;
  const bool classifier = model.config().head == HeadKind::classifier;
  const std::size_t n = data.size();
  std::size_t correct = 0;
  double sse = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    rows.resize(std::min(batch_size, n - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto out = model.forward(data.batch(rows), {Mode::infer, 0, false, {}}).output;
    const auto v = out.values();
    if (classifier) {
      const std::size_t C = out.dim(-1);
      for (std::size_t b = 0; b < rows.size(); ++b) {
        const auto row = v.subspan(b * C, C);
        const auto arg = std::max_element(row.begin(), row.end()) - row.begin();
        correct += arg == data.classes[rows[b]] ? 1 : 0;
      }
    } else {
      for (std::size_t b = 0; b < rows.size(); ++b) {
        const double d = v[b] - data.values[rows[b]];
        sse += d * d;
      }
    }
  }
  if (classifier) {
    return static_cast<double>(correct) / static_cast<double>(n);
  }
  const double mean_y = std::accumulate(data.values.begin(), data.values.end(), 0.0) /
                        static_cast<double>(n);
  double sst = 0.0;
  for (double y : data.values) {
    sst += (y - mean_y) * (y - mean_y);
  }
  return sst > 0.0 ? 1.0 - sse / sst : 0.0;
}

std::uint64_t adapter_seed_for(std::uint64_t seed) { return derive_seed({seed, 0xada9}); }

TrainResult train(Model& model, const ExperimentConfig& config, const SyntheticTask& task,
                  std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  const auto& opt = config.optimizer;
  const std::string hash = config_hash(config);
  const auto started = std::chrono::steady_clock::now();

  TrainResult result;
  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    const std::string run_id =
        options.run_id.empty() ? hash + "-s" + std::to_string(seed) : options.run_id;
    result.run_dir = options.out_dir / run_id;
    std::filesystem::create_directories(result.run_dir);
    metrics.open(result.run_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) {
      throw std::runtime_error("cannot write " + (result.run_dir / "metrics.jsonl").string());
    }
  }

  const auto params = model.parameters();
  AdamW optimizer(model.trainable_parameters(), opt);
  const std::size_t n = task.train.size();
  const std::size_t steps_per_epoch = (n + opt.batch_size - 1) / opt.batch_size;
  const std::size_t total_steps = steps_per_epoch * opt.epochs;

  Rng shuffle_rng(derive_seed({seed, 0x5487}));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  Snapshot best;
  bool have_best = false;
  std::size_t step = 0;
  double epoch_loss = 0.0;
  double epoch_consistency = 0.0;
  std::size_t epoch_batches = 0;

  auto emit = [&](RunRecord record) {
    record.config_hash = hash;
    record.seed = seed;
    if (config.log_wall_time) {
      record.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    if (metrics.is_open()) {
      metrics << to_json(record).dump() << '\n';
      metrics.flush();
    }
    result.records.push_back(std::move(record));
  };

  for (std::size_t epoch = 1; epoch <= opt.epochs && !result.aborted; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    }
    epoch_loss = epoch_consistency = 0.0;
    epoch_batches = 0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::span<const std::size_t> rows(order.data() + start,
                                              std::min(opt.batch_size, n - start));
      TwinPassResult r;
      try {
        r = twin_pass_step(model, task.train.batch(rows), task.train.targets(rows),
                           config.compensation, derive_seed({seed, 0x57e9, step}));
        optimizer.step(scheduled_learning_rate(opt.learning_rate, step, total_steps,
                                               opt.warmup_ratio));
      } catch (const NumericError& e) {
        result.aborted = true;
        result.diagnostic = e.what();
        optimizer.zero_grad();
        RunRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.train_loss = std::nan("");
        rec.status = std::string("aborted: ") + e.what();
        emit(rec);
        break;
      }
      ++step;
      epoch_loss += r.total_loss;
      epoch_consistency += r.consistency_loss;
      ++epoch_batches;
    }
    if (result.aborted) {
      break;
    }
    if (epoch % opt.eval_every != 0 && epoch != opt.epochs) {
      continue;
    }
    RunRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(epoch_batches);
    rec.consistency_loss = epoch_consistency / static_cast<double>(epoch_batches);
    rec.train_metric = evaluate(model, task.train);
    rec.eval_metric = evaluate(model, task.eval);
    if (!have_best || rec.eval_metric > result.best_eval) {
      have_best = true;
      result.best_eval = rec.eval_metric;
      result.best_step = step;
      best = snapshot(params);
    }
    emit(rec);
  }

  if (have_best && !result.run_dir.empty()) {
    const Snapshot last = snapshot(params);
    restore(params, best);
    save_checkpoint(model, result.run_dir / "best.ckpt", hash);
    restore(params, last);
  }
  return result;
}

TrainResult train(const ExperimentConfig& config, const SyntheticTask& task, std::uint64_t seed,
                  const TrainOptions& options) {
  Model model(config.model_config(), adapter_seed_for(seed));
  return train(model, config, task, seed, options);
}

}  // namespace hk
