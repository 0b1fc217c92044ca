// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"

#include "hk/errors.hpp"
#include "hk/losses.hpp"
#include "hk/rng.hpp"

using namespace hk;

namespace {

std::vector<double> random_distribution(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = std::exp(3.0 * rng.normal());
    total += x;
  }
  for (auto& x : p) {
    x /= total;
  }
  return p;
}

double kl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d += p[i] * std::log(std::max(p[i], 1e-12) / std::max(q[i], 1e-12));
  }
  return d;
}

ModelConfig tiny_config(HeadKind head) {
  ModelConfig c;
  c.num_layers = 2;
  c.d_model = 8;
  c.num_heads = 2;
  c.d_ff = 12;
  c.vocab_size = 10;
  c.max_len = 6;
  c.lora_rank = 2;
  c.lora_alpha = 4.0;
  c.num_classes = 3;
  c.head = head;
  c.dropout_specs = {DropoutSpec::make(DropPosition::attn_logits, StructuralPattern::column, 0.3),
                     DropoutSpec::make(DropPosition::ffn_hidden, StructuralPattern::element, 0.3)};
  return c;
}

TokenBatch tokens() {
  Rng rng(3);
  TokenBatch t{4, 6, std::vector<int>(24)};
  for (auto& id : t.ids) {
    id = static_cast<int>(rng.index(10));
  }
  return t;
}

Targets targets() { return {{0, 1, 2, 1}, {0.5, -1.0, 0.25, 2.0}}; }

void perturb_adapters(const Model& m) {
  Rng rng(12);
  for (const auto& p : m.trainable_parameters()) {
    for (auto& v : Tensor(p.tensor).mutable_values()) {
      v += rng.normal(0.0, 0.3);
    }
  }
}

std::vector<std::vector<double>> grads(const Model& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.trainable_parameters()) {
    out.push_back(p.tensor.grad());
  }
  return out;
}

}  // namespace

TEST_CASE("KL worked examples") {
  const std::vector<double> same{0.3, 0.7};
  CHECK(kl_bidirectional(same, same) == 0.0);
  const std::vector<double> p1{0.5, 0.5}, p2{0.25, 0.75};
  CHECK(kl_divergence(p1, p2) == doctest::Approx(0.143841).epsilon(1e-5));
  CHECK(kl_divergence(p2, p1) == doctest::Approx(0.130812).epsilon(1e-5));
  CHECK(std::abs(kl_bidirectional(p1, p2) - 0.137327) <= 1e-6);
  CHECK(kl_bidirectional(p2, p1) == kl_bidirectional(p1, p2));
  CHECK(std::abs(js_to_inference(p1, p2) - 0.143841) <= 1e-6);
  CHECK(js_to_inference(same, same) == 0.0);
}

TEST_CASE("KL is symmetric, nonnegative and matches a direct oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = 2 + rng.index(8);
    const auto p = random_distribution(rng, n);
    const auto q = random_distribution(rng, n);
    const double pq = kl_bidirectional(p, q);
    CHECK(pq == kl_bidirectional(q, p));
    CHECK(pq >= 0.0);
    CHECK(pq == doctest::Approx(0.5 * (kl_oracle(p, q) + kl_oracle(q, p))).epsilon(1e-12));
  }
}

TEST_CASE("loss contract errors") {
  const std::vector<double> two{0.5, 0.5}, three{0.2, 0.3, 0.5}, bad{0.5, 0.6};
  CHECK_THROWS_AS(kl_bidirectional(two, three), ContractError);
  CHECK_THROWS_AS(kl_bidirectional(two, bad), ContractError);
  CHECK_THROWS_AS((void)kl_bidirectional(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})),
                  ContractError);
  CHECK_THROWS_AS((void)cross_entropy(Tensor::full({1, 3}, 1.0 / 3), std::vector<int>{3}),
                  ContractError);
  CHECK(parse_compensation("js_to_inference") == CompensationKind::js_to_inference);
  CHECK_THROWS_AS(parse_compensation("r-drop"), ContractError);
}

TEST_CASE("task loss examples") {
  const auto perfect = Tensor::from({2, 3}, {1, 0, 0, 0, 0, 1});
  CHECK(cross_entropy(perfect, std::vector<int>{0, 2}).item() <= 1e-10);
  const auto uniform = Tensor::full({2, 4}, 0.25);
  CHECK(cross_entropy(uniform, std::vector<int>{1, 3}).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
  const std::vector<double> y{1.0, -2.0};
  CHECK(mean_squared_error(Tensor::from({2}, y), y).item() == 0.0);
}

TEST_CASE("tensor KL matches the scalar form row by row") {
  Rng rng(9);
  const auto a = random_distribution(rng, 3), b = random_distribution(rng, 3);
  const auto c = random_distribution(rng, 3), d = random_distribution(rng, 3);
  std::vector<double> p1 = a, p2 = b;
  p1.insert(p1.end(), c.begin(), c.end());
  p2.insert(p2.end(), d.begin(), d.end());
  const auto t = kl_bidirectional(Tensor::from({2, 3}, p1), Tensor::from({2, 3}, p2)).item();
  CHECK(t == doctest::Approx(0.5 * (kl_bidirectional(a, b) + kl_bidirectional(c, d))));
  const auto j = js_to_inference(Tensor::from({2, 3}, p1), Tensor::from({2, 3}, p2)).item();
  CHECK(j == doctest::Approx(0.5 * (js_to_inference(a, b) + js_to_inference(c, d))));
}

TEST_CASE("js_to_inference sends no gradient into the reference") {
  auto p = Tensor::from({1, 2}, {0.5, 0.5}, true);
  auto q = Tensor::from({1, 2}, {0.25, 0.75}, true);
  backward(js_to_inference(p, q));
  CHECK(p.has_grad());
  CHECK_FALSE(q.has_grad());
}

TEST_CASE("twin pass without compensation is a single pass") {
  const Model m(tiny_config(HeadKind::classifier), 3);
  const auto r = twin_pass_step(m, tokens(), targets(), {}, 42);
  CHECK(r.forward_passes == 1);
  CHECK(r.total_loss == r.task_loss);
  CHECK(r.consistency_loss == 0.0);
  const auto zero = twin_pass_step(m, tokens(), targets(), {CompensationKind::kl_bidirectional, 0.0}, 42);
  CHECK(zero.forward_passes == 1);
}

TEST_CASE("twin pass total is task plus weighted consistency") {
  for (auto head : {HeadKind::classifier, HeadKind::regressor}) {
    for (auto kind : {CompensationKind::kl_bidirectional, CompensationKind::js_to_inference}) {
      const Model m(tiny_config(head), 3);
      perturb_adapters(m);
      for (double lambda : {1.0, 0.37}) {
        const auto r = twin_pass_step(m, tokens(), targets(), {kind, lambda}, 42);
        CHECK(r.forward_passes == 2);
        CHECK(r.consistency_loss > 0.0);
        CHECK(std::abs(r.total_loss - (r.task_loss + lambda * r.consistency_loss)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("identical masks give zero consistency") {
  const Model m(tiny_config(HeadKind::classifier), 3);
  perturb_adapters(m);
  TwinPassOptions same;
  same.share_masks = true;
  const auto r = twin_pass_step(m, tokens(), targets(), {CompensationKind::kl_bidirectional, 1.0},
                                42, same);
  CHECK(r.consistency_loss == 0.0);
  CHECK(r.total_loss == r.task_loss);
}

TEST_CASE("branch two is detached from the update") {
  const Model m(tiny_config(HeadKind::classifier), 3);
  perturb_adapters(m);
  const CompensationSpec kl{CompensationKind::kl_bidirectional, 1.0};
  TwinPassOptions tracked;
  tracked.track_branch2_graph = true;
  const auto r = twin_pass_step(m, tokens(), targets(), kl, 42, tracked);
  CHECK(r.p2.requires_grad());
  CHECK_FALSE(r.p2.has_grad());
  const auto with_graph = grads(m);
  for (const auto& p : m.trainable_parameters()) {
    Tensor(p.tensor).zero_grad();
  }
  (void)twin_pass_step(m, tokens(), targets(), kl, 42);
  CHECK(grads(m) == with_graph);
  for (const auto& p : m.trainable_parameters()) {
    Tensor(p.tensor).zero_grad();
  }
}

TEST_CASE("frozen backbone receives no gradient") {
  const Model m(tiny_config(HeadKind::classifier), 3);
  (void)twin_pass_step(m, tokens(), targets(), {CompensationKind::kl_bidirectional, 1.0}, 1);
  for (const auto& p : m.parameters()) {
    CHECK(p.tensor.has_grad() == p.trainable);
    Tensor(p.tensor).zero_grad();
  }
}
