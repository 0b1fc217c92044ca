// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"

#include "hk/dropout.hpp"
#include "hk/errors.hpp"
#include "hk/rng.hpp"

using namespace hk;

namespace {

MaskPlan row_mask(std::vector<std::uint8_t> keep) {
  MaskPlan m;
  m.rows = 1;
  m.cols = keep.size();
  m.keep = std::move(keep);
  return m;
}

}  // namespace

TEST_CASE("drop_key then softmax matches the hand example") {
  const std::vector<MaskPlan> masks{row_mask({1, 1, 0})};
  const auto w = softmax_row(drop_key(Tensor::from({1, 3}, {1, 2, 3}), masks));
  CHECK(w[0] == doctest::Approx(0.268941).epsilon(1e-5));
  CHECK(w[1] == doctest::Approx(0.731059).epsilon(1e-5));
  CHECK(w[2] == 0.0);
}

TEST_CASE("drop_attention renormalizes the surviving mass") {
  const std::vector<MaskPlan> masks{row_mask({1, 1, 0})};
  const auto p = softmax_row(Tensor::from({1, 3}, {1, 2, 3}));
  CHECK(p[0] + p[1] == doctest::Approx(0.334759).epsilon(1e-5));
  for (bool stop : {false, true}) {
    const auto w = drop_attention(p, masks, stop);
    CHECK(w[0] == doctest::Approx(0.268941).epsilon(1e-5));
    CHECK(w[1] == doctest::Approx(0.731059).epsilon(1e-5));
    CHECK(w[2] == 0.0);
  }
}

TEST_CASE("rate zero is the identity at every position") {
  Rng rng(3);
  std::vector<double> v(2 * 4 * 4);
  for (auto& x : v) {
    x = rng.normal();
  }
  const auto x = Tensor::from({2, 4, 4}, v);
  const std::vector<MaskPlan> keep{all_keep(4, 4, AxisSemantics::attention)};
  const auto k = drop_key(x, keep);
  const auto p = softmax_row(x);
  const auto a = drop_attention(p, keep, true);
  const auto h = hidden_cut(x, keep, 0.0);
  const auto e = input_cutoff(x, keep, 0.0);
  const auto o = output_dropout(x, 0.0, 5);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(k[i] == x[i]);
    CHECK(h[i] == x[i]);
    CHECK(e[i] == x[i]);
    CHECK(o[i] == x[i]);
    CHECK(std::abs(a[i] - p[i]) <= 1e-15);
  }
}

TEST_CASE("drop_key severs the masked logit") {
  auto g = Tensor::from({1, 4}, {0.3, -1.0, 2.0, 0.5}, true);
  const std::vector<MaskPlan> masks{row_mask({1, 0, 1, 1})};
  const auto w = softmax_row(drop_key(g, masks));
  backward(sum(mul(w, Tensor::from({1, 4}, {1.0, 2.0, -3.0, 0.7}))));
  CHECK(g.grad()[1] == 0.0);
}

TEST_CASE("gradient-stopped drop_attention leaks into the masked logit") {
  auto g = Tensor::from({1, 3}, {0.0, 0.0, 0.0}, true);
  const std::vector<MaskPlan> masks{row_mask({1, 1, 0})};
  const auto w = drop_attention(softmax_row(g), masks, true);
  backward(gather_last(w, std::vector<int>{0}));
  // -e^u e^m / (S S_kept) = -1 / 6 at g = 0.
  CHECK(g.grad()[2] == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("drop_key rejects an all-dropped row") {
  const std::vector<MaskPlan> masks{row_mask({0, 0})};
  CHECK_THROWS_AS((void)drop_key(Tensor::from({1, 2}, {1, 2}), masks), DegeneracyError);
  CHECK_THROWS_AS((void)drop_attention(softmax_row(Tensor::from({1, 2}, {1, 2})), masks, false),
                  DegeneracyError);
}

TEST_CASE("hidden_cut example and contract") {
  MaskPlan m;
  m.rows = 1;
  m.cols = 2;
  m.keep = {0, 1};
  m.axes = AxisSemantics::tokens_by_features;
  const std::vector<MaskPlan> masks{m};
  const auto y = hidden_cut(Tensor::from({1, 2}, {2, 4}), masks, 0.5);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 8.0);
  CHECK_THROWS_AS((void)hidden_cut(Tensor::from({1, 2}, {2, 4}), masks, 1.0), ContractError);
  CHECK_THROWS_AS((void)output_dropout(Tensor::from({1, 2}, {2, 4}), 1.0, 0), ContractError);
}

TEST_CASE("hidden_cut is unbiased") {
  const std::size_t L = 2, D = 3;
  const auto h = Tensor::from({L, D}, {1.0, -2.0, 0.5, 3.0, 1.5, -1.0});
  std::vector<double> acc(L * D, 0.0);
  const int draws = 100000;
  for (int s = 0; s < draws; ++s) {
    const std::vector<MaskPlan> masks{sample_mask(L, D, StructuralPattern::element, 0.3,
                                                  static_cast<std::uint64_t>(s),
                                                  AxisSemantics::tokens_by_features)};
    const auto y = hidden_cut(h, masks, 0.3);
    for (std::size_t i = 0; i < L * D; ++i) {
      acc[i] += y[i];
    }
  }
  for (std::size_t i = 0; i < L * D; ++i) {
    CHECK(std::abs(acc[i] / draws - h[i]) <= 0.01 * std::abs(h[i]));
  }
}

TEST_CASE("output dropout is unbiased and may zero everything") {
  const auto x = Tensor::from({4}, {1.0, 2.0, -1.0, 0.5});
  std::vector<double> acc(4, 0.0);
  const int draws = 100000;
  for (int s = 0; s < draws; ++s) {
    const auto y = output_dropout(x, 0.3, static_cast<std::uint64_t>(s));
    for (std::size_t i = 0; i < 4; ++i) {
      acc[i] += y[i];
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(acc[i] / draws - x[i]) <= 0.01 * std::abs(x[i]));
  }
  bool saw_zero_vector = false;
  for (std::uint64_t s = 0; s < 2000 && !saw_zero_vector; ++s) {
    const auto y = output_dropout(Tensor::from({1}, {1.0}), 0.5, s);
    saw_zero_vector = y[0] == 0.0;
  }
  CHECK(saw_zero_vector);
}

TEST_CASE("input cutoff span zeroes whole token rows") {
  const std::size_t L = 10, D = 4;
  const auto x = Tensor::full({1, L, D}, 1.0);
  const std::vector<MaskPlan> masks{
      sample_mask(L, D, StructuralPattern::span, 0.2, 11, AxisSemantics::tokens_by_features)};
  const auto y = input_cutoff(x, masks, 0.2);
  std::size_t zero_rows = 0;
  for (std::size_t t = 0; t < L; ++t) {
    bool all_zero = true;
    for (std::size_t d = 0; d < D; ++d) {
      all_zero = all_zero && y[t * D + d] == 0.0;
    }
    zero_rows += all_zero ? 1 : 0;
  }
  CHECK(zero_rows == 2);
}

TEST_CASE("input cutoff keeps the mean norm") {
  Rng rng(21);
  const std::size_t L = 8, D = 16;
  std::vector<double> v(L * D);
  for (auto& x : v) {
    x = rng.normal();
  }
  const auto x = Tensor::from({L, D}, v);
  double base = 0.0;
  for (double e : v) {
    base += std::abs(e);
  }
  double total = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const std::vector<MaskPlan> masks{
        sample_mask(L, D, StructuralPattern::element, 0.1, s, AxisSemantics::tokens_by_features)};
    const auto y = input_cutoff(x, masks, 0.1);
    for (std::size_t i = 0; i < L * D; ++i) {
      total += std::abs(y[i]);
    }
  }
  CHECK(std::abs(total / 1000.0 / base - 1.0) <= 0.05);
}

TEST_CASE("dropout spec invariants") {
  CHECK(DropoutSpec::make(DropPosition::attn_logits, StructuralPattern::column, 0.1).rescale ==
        RescaleMode::none);
  CHECK(DropoutSpec::make(DropPosition::attn_weights, StructuralPattern::element, 0.1).rescale ==
        RescaleMode::normalized);
  for (auto p : {DropPosition::ffn_hidden, DropPosition::input_embed, DropPosition::output_repr}) {
    CHECK(DropoutSpec::make(p, StructuralPattern::element, 0.1).rescale ==
          RescaleMode::inverted_rate);
  }
  auto bad = DropoutSpec::make(DropPosition::attn_logits, StructuralPattern::column, 0.1);
  bad.rescale = RescaleMode::inverted_rate;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  CHECK_THROWS_AS(DropoutSpec::make(DropPosition::ffn_hidden, StructuralPattern::element, 1.0),
                  ContractError);

  const auto late = DropoutSpec::make(DropPosition::ffn_hidden, StructuralPattern::element, 0.1,
                                      false, LayerScope::latter_half);
  CHECK_FALSE(late.applies_to_layer(0, 3));
  CHECK_FALSE(late.applies_to_layer(1, 3));
  CHECK(late.applies_to_layer(2, 3));
  CHECK_FALSE(late.applies_to_layer(1, 4));
  CHECK(late.applies_to_layer(2, 4));
}
