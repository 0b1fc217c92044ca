// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any selected criterion fails.
//
//   hk_acceptance [--criteria 1,2,...] [--config F] [--out D]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hk/analytic.hpp"
#include "hk/config.hpp"
#include "hk/gradcheck.hpp"
#include "hk/losses.hpp"
#include "hk/model.hpp"
#include "hk/rng.hpp"
#include "hk/stats.hpp"
#include "hk/sweep.hpp"
#include "hk/train.hpp"

using namespace hk;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

struct Context {
  ExperimentConfig config;
  std::filesystem::path out;
  int workers = 0;
  std::optional<analytic::SuiteReport> suite;
  double suite_seconds = 0.0;

  const analytic::SuiteReport& analytic_suite() {
    if (!suite) {
      const auto start = Clock::now();
      suite = analytic::run_suite({});
      suite_seconds = seconds_since(start);
    }
    return *suite;
  }
};

TokenBatch random_tokens(std::size_t batch, std::size_t len, std::size_t vocab,
                         std::uint64_t seed) {
  Rng rng(seed);
  TokenBatch t{batch, len, std::vector<int>(batch * len)};
  for (auto& id : t.ids) {
    id = static_cast<int>(rng.index(vocab));
  }
  return t;
}

void randomize_trainable(const Model& m, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& p : m.trainable_parameters()) {
    for (auto& v : Tensor(p.tensor).mutable_values()) {
      v = rng.normal(0.0, 0.3);
    }
  }
}

Outcome forward_equivalence(Context& ctx) {
  const auto& s = ctx.analytic_suite();
  const bool pass = s.instances == 1000 && s.forward_equivalence_ok(1e-12) && ctx.suite_seconds < 5.0;
  return {pass, fmt("%zu instances (%zu multi-mask), max diff %.3g, %.2f s", s.instances,
                    s.multi_mask_instances, s.max_forward_diff, ctx.suite_seconds)};
}

Outcome gradient_ratio(Context& ctx) {
  const auto& s = ctx.analytic_suite();
  return {s.ratio_ok(1e-10),
          fmt("max |k_autodiff - k_closed| %.3g, k in [%.3g, %.10g], %zu single-survivor, "
              "%zu sweep violations",
              s.max_k_diff, s.min_k, s.max_k, s.degenerate_k, s.k_sweep_violations)};
}

Outcome gradient_noise(Context& ctx) {
  const auto& s = ctx.analytic_suite();
  return {s.gradient_noise_ok(1e-8),
          fmt("DropKey max |dO/dg_m| %.3g, DropAttention+NoGrad min |dO/dg_m| %.3g over %zu "
              "generic instances",
              s.max_dropkey_gm_grad, s.min_dropattention_gm_grad, s.generic_instances)};
}

ModelConfig two_layer_model(const ExperimentConfig& c) {
  auto m = c.model_config();
  m.num_layers = 2;
  m.dropout_specs.clear();
  return m;
}

Outcome backward_equivalence(Context& ctx) {
  // Both models see the same masks: the provider ignores the position.
  const MaskProvider frozen = [](const MaskRequest& r) {
    return sample_mask(r.rows, r.cols, r.spec->pattern, r.spec->rate,
                       derive_seed({r.step_seed, r.layer, r.batch, r.head}), r.axes);
  };
  auto key_cfg = two_layer_model(ctx.config);
  auto attn_cfg = key_cfg;
  key_cfg.dropout_specs = {
      DropoutSpec::make(DropPosition::attn_logits, StructuralPattern::column, 0.3)};
  attn_cfg.dropout_specs = {
      DropoutSpec::make(DropPosition::attn_weights, StructuralPattern::column, 0.3, false)};
  const Model key_model(key_cfg, 11);
  const Model attn_model(attn_cfg, 11);
  randomize_trainable(key_model, 5);
  randomize_trainable(attn_model, 5);

  const auto tokens = random_tokens(4, key_cfg.max_len, key_cfg.vocab_size, 3);
  const std::vector<int> labels{0, 1, 2, 3};
  double max_diff = 0.0;
  std::size_t compared = 0;
  for (std::uint64_t step = 0; step < 5; ++step) {
    for (const Model* m : {&key_model, &attn_model}) {
      const auto out = m->forward(tokens, {Mode::train, step, false, frozen}).output;
      backward(cross_entropy(out, labels));
    }
    const auto a = key_model.trainable_parameters();
    const auto b = attn_model.trainable_parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto ga = a[i].tensor.grad();
      const auto gb = b[i].tensor.grad();
      for (std::size_t j = 0; j < ga.size(); ++j) {
        max_diff = std::max(max_diff, std::abs(ga[j] - gb[j]));
      }
      compared += ga.size();
      Tensor(a[i].tensor).zero_grad();
      Tensor(b[i].tensor).zero_grad();
    }
  }
  return {max_diff <= 1e-10,
          fmt("max |grad diff| %.3g over %zu gradient entries (2 layers, 5 mask draws)", max_diff,
              compared)};
}

Outcome autodiff_certification(Context& ctx) {
  const auto start = Clock::now();
  auto cfg = ctx.config.model_config();
  cfg.dropout_specs = {
      DropoutSpec::make(DropPosition::attn_logits, StructuralPattern::column, 0.1),
      DropoutSpec::make(DropPosition::attn_weights, StructuralPattern::element, 0.1, false),
      DropoutSpec::make(DropPosition::ffn_hidden, StructuralPattern::element, 0.1),
      DropoutSpec::make(DropPosition::input_embed, StructuralPattern::element, 0.1),
      DropoutSpec::make(DropPosition::output_repr, StructuralPattern::element, 0.1)};
  const Model model(cfg, 21);
  randomize_trainable(model, 8);
  const auto tokens = random_tokens(2, cfg.max_len, cfg.vocab_size, 4);
  const std::vector<int> labels{1, 3};
  // A fixed step seed freezes every mask across the perturbed evaluations.
  auto loss = [&] {
    return cross_entropy(model.forward(tokens, {Mode::train, 77, false, {}}).output, labels);
  };
  std::vector<std::pair<std::string, Tensor>> params;
  std::size_t entries = 0;
  for (const auto& p : model.trainable_parameters()) {
    params.emplace_back(p.name, p.tensor);
    entries += p.tensor.numel();
  }
  GradCheckOptions fd_options;
  fd_options.step = 1e-4;
  fd_options.order = 4;
  double worst = 0.0;
  std::string worst_name;
  bool all = true;
  for (const auto& r : check_gradients(loss, params, fd_options)) {
    all = all && r.passed;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.parameter_name;
    }
  }
  const double elapsed = seconds_since(start);
  return {all && worst <= 1e-6 && elapsed < 60.0,
          fmt("%zu tensors, %zu entries, max rel err %.3g (%s), %.1f s", params.size(), entries,
              worst, worst_name.c_str(), elapsed)};
}

Outcome loss_contracts(Context&) {
  Rng rng(606);
  std::size_t violations = 0;
  double js_max = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng.index(15);
    std::vector<double> p(n), q(n);
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::exp(3.0 * rng.normal());
      q[i] = std::exp(3.0 * rng.normal());
      sp += p[i];
      sq += q[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    const double pq = kl_bidirectional(p, q);
    const double qp = kl_bidirectional(q, p);
    violations += (pq != qp || pq < 0.0) ? 1 : 0;
    js_max = std::max(js_max, std::abs(js_to_inference(p, p)));
  }
  const std::vector<double> p1{0.5, 0.5}, p2{0.25, 0.75};
  const double worked = kl_bidirectional(p1, p2);
  const bool pass = violations == 0 && std::abs(worked - 0.137327) <= 1e-6 && js_max == 0.0;
  return {pass, fmt("10000 pairs, %zu symmetry/sign violations, worked pair %.6f, max JS on "
                    "identical pairs %.3g",
                    violations, worked, js_max)};
}

Outcome overfitting(Context& ctx) {
  const auto start = Clock::now();
  const auto base = with_bundle(ctx.config, method_bundle("baseline", ctx.config.methods));
  SweepSpec spec;
  spec.base = base;
  spec.axis = SweepAxis::lora_rank;
  spec.values = {static_cast<double>(base.model.lora_rank)};
  spec.seeds = base.seeds;
  const auto result = sweep(spec, {ctx.out / "overfitting", ctx.workers});
  std::vector<double> train_acc, drop, peak, final_eval;
  for (const auto& c : result.cells) {
    train_acc.push_back(c.summary.final_train);
    drop.push_back(c.summary.peak_to_final_drop);
    peak.push_back(c.summary.best_eval);
    final_eval.push_back(c.summary.final_eval);
  }
  const double elapsed = seconds_since(start);
  const bool pass = spec.seeds.size() >= 5 && median(train_acc) >= 0.99 && median(drop) >= 0.02 &&
                    elapsed < 1800.0;
  return {pass, fmt("%zu seeds: median final train acc %.4f, median peak eval %.4f, median final "
                    "eval %.4f, median drop %.4f, %.0f s",
                    spec.seeds.size(), median(train_acc), median(peak), median(final_eval),
                    median(drop), elapsed)};
}

Outcome mitigation(Context& ctx) {
  const auto start = Clock::now();
  const auto& base = ctx.config;
  const auto seeds = base.seeds;
  std::vector<MethodBundle> core{method_bundle("baseline", base.methods),
                                 method_bundle("hiddenkey-", base.methods),
                                 method_bundle("hiddenkey", base.methods)};
  const auto report = compare_bundles(core, seeds, base, {ctx.out / "mitigation", ctx.workers});

  // DropKey against gradient-stopped DropAttention over a shared rate grid.
  const auto& grid = kDefaultDropoutRates;
  std::map<double, std::pair<MethodSummary, MethodSummary>> by_rate;
  std::vector<MethodBundle> attention;
  for (double rate : grid) {
    auto rates = base.methods;
    rates.attn_rate = rate;
    auto dk = method_bundle("dropkey", rates);
    auto da = method_bundle("dropattention", rates);
    dk.name += "@" + fmt("%g", rate);
    da.name += "@" + fmt("%g", rate);
    attention.push_back(dk);
    attention.push_back(da);
  }
  const auto attn_report =
      compare_bundles(attention, seeds, base, {ctx.out / "attention_rates", ctx.workers});
  double best_rate = grid.front();
  double best_score = -1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& dk = attn_report.methods[2 * i];
    const auto& da = attn_report.methods[2 * i + 1];
    const double score = 0.5 * (dk.median_best_eval + da.median_best_eval);
    if (score > best_score) {
      best_score = score;
      best_rate = grid[i];
    }
  }
  const auto tag = fmt("@%g", best_rate);
  const auto& dk = attn_report.method("dropkey" + tag);
  const auto& da = attn_report.method("dropattention" + tag);
  const auto shared = compare_summaries({dk, da});

  const double hk = report.method("hiddenkey").median_best_eval;
  const double hkm = report.method("hiddenkey-").median_best_eval;
  const double bl = report.method("baseline").median_best_eval;
  std::string pvalues;
  for (const auto* r : {&report, &shared}) {
    for (const auto& p : r->pairs) {
      pvalues += fmt(" p(%s,%s)=%.4f", p.a.c_str(), p.b.c_str(), p.test.p_value);
    }
  }
  const bool ordering = hk >= hkm && hkm >= bl;
  const bool attention_ok = dk.median_best_eval >= da.median_best_eval;
  const bool pvalues_ok = !report.pairs.empty() && !shared.pairs.empty();
  return {ordering && attention_ok && pvalues_ok,
          fmt("median best eval: hiddenkey %.4f, hiddenkey- %.4f, baseline %.4f; at shared "
              "rate %g dropkey %.4f vs dropattention+nograd %.4f; %.0f s;",
              hk, hkm, bl, best_rate, dk.median_best_eval, da.median_best_eval,
              seconds_since(start)) +
              pvalues};
}

Outcome determinism(Context& ctx) {
  auto cfg = ctx.config;
  cfg.optimizer.epochs = 6;
  cfg.optimizer.eval_every = 2;
  cfg.dropout_specs = hiddenkey_bundle(0.1, 0.1, 1.0).specs;
  cfg.compensation = {CompensationKind::kl_bidirectional, 1.0};
  const auto task = make_task(cfg.task);
  const auto dir = ctx.out / "determinism";
  std::filesystem::remove_all(dir);
  const auto a = train(cfg, task, 3, {dir / "a", "run"});
  const auto b = train(cfg, task, 3, {dir / "b", "run"});
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const auto fa = slurp(dir / "a" / "run" / "metrics.jsonl");
  const bool files_equal = !fa.empty() && fa == slurp(dir / "b" / "run" / "metrics.jsonl");

  // Round trip: the trained model, saved and reloaded into a fresh instance.
  Model trained(cfg.model_config(), adapter_seed_for(3));
  (void)train(trained, cfg, task, 3);
  save_checkpoint(trained, dir / "final.ckpt", config_hash(cfg));
  Model restored(cfg.model_config(), 999);
  (void)load_checkpoint(restored, dir / "final.ckpt");
  std::vector<std::size_t> rows(task.eval.size());
  std::iota(rows.begin(), rows.end(), 0);
  const auto batch = task.eval.batch(rows);
  NoGradGuard no_grad;
  const auto x = trained.forward(batch, {}).output.values();
  const auto y = restored.forward(batch, {}).output.values();
  const bool outputs_equal = std::equal(x.begin(), x.end(), y.begin(), y.end());

  Model best(cfg.model_config(), 999);
  (void)load_checkpoint(best, dir / "a" / "run" / "best.ckpt");
  const bool best_equal = evaluate(best, task.eval) == a.best_eval;
  return {files_equal && outputs_equal && best_equal,
          fmt("metrics files %s (%zu bytes), checkpoint outputs %s over %zu examples, best.ckpt "
              "eval %s",
              files_equal ? "identical" : "DIFFER", fa.size(),
              outputs_equal ? "bit-identical" : "DIFFER", rows.size(),
              best_equal ? "reproduced" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string criteria = "1,2,3,4,5,6,7,8,9";
  std::string config_path = std::string(HK_SOURCE_DIR) + "/configs/acceptance.json";
  std::string out = (std::filesystem::temp_directory_path() / "hk_acceptance").string();
  int workers = 0;
  app.add_option("--criteria", criteria, "Comma-separated criterion numbers");
  app.add_option("--config", config_path, "Experiment config for criteria 4, 5, 7, 8, 9");
  app.add_option("--out", out, "Scratch directory for runs");
  app.add_option("--workers", workers, "Concurrent training runs");
  CLI11_PARSE(app, argc, argv);

  using Check = Outcome (*)(Context&);
  const std::map<int, std::pair<const char*, Check>> checks{
      {1, {"forward equivalence", forward_equivalence}},
      {2, {"gradient-ratio theorem", gradient_ratio}},
      {3, {"gradient noise", gradient_noise}},
      {4, {"backward equivalence", backward_equivalence}},
      {5, {"autodiff certification", autodiff_certification}},
      {6, {"loss contracts", loss_contracts}},
      {7, {"overfitting phenomenon", overfitting}},
      {8, {"mitigation ordering", mitigation}},
      {9, {"determinism and persistence", determinism}},
  };

  Context ctx;
  ctx.config = load_config(config_path);
  ctx.out = out;
  ctx.workers = workers;

  std::set<int> selected;
  std::stringstream in(criteria);
  for (std::string item; std::getline(in, item, ',');) {
    selected.insert(std::stoi(item));
  }
  int failures = 0;
  for (int id : selected) {
    const auto it = checks.find(id);
    if (it == checks.end()) {
      std::printf("FAIL criterion %d: no such criterion\n", id);
      ++failures;
      continue;
    }
    Outcome o;
    try {
      o = it->second.second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, it->second.first,
                o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
