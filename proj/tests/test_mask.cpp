// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "doctest.h"

#include "hk/errors.hpp"
#include "hk/mask.hpp"
#include "hk/rng.hpp"

using namespace hk;

namespace {

std::vector<std::size_t> dropped_columns_of_row(const MaskPlan& m, std::size_t r) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < m.cols; ++c) {
    if (!m.kept(r, c)) {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("rate zero keeps everything") {
  for (auto p : {StructuralPattern::element, StructuralPattern::column, StructuralPattern::span}) {
    const auto m = sample_mask(5, 7, p, 0.0, 1, AxisSemantics::attention);
    CHECK(kept_fraction(m) == 1.0);
  }
}

TEST_CASE("span of rate 0.2 over 10 keys drops one run of 2") {
  const auto m = sample_mask(1, 10, StructuralPattern::span, 0.2, 42, AxisSemantics::attention);
  const auto dropped = dropped_columns_of_row(m, 0);
  REQUIRE(dropped.size() == 2);
  CHECK(dropped[1] == dropped[0] + 1);
  CHECK(kept_fraction(m) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(span_length(0.2, 10) == 2);
  CHECK(span_length(0.01, 10) == 1);
}

TEST_CASE("element drop fraction concentrates") {
  const auto m = sample_mask(1000, 1000, StructuralPattern::element, 0.1, 7,
                             AxisSemantics::tokens_by_features);
  const double dropped = 1.0 - kept_fraction(m);
  CHECK(dropped >= 0.095);
  CHECK(dropped <= 0.105);
}

TEST_CASE("kept_fraction examples") {
  CHECK(kept_fraction(all_keep(3, 4, AxisSemantics::attention)) == 1.0);
  auto m = all_keep(2, 2, AxisSemantics::tokens_by_features);
  m.keep[3] = 0;
  CHECK(kept_fraction(m) == 0.75);
}

TEST_CASE("sample_mask is a pure function of its arguments") {
  const auto a = sample_mask(8, 9, StructuralPattern::element, 0.3, 99, AxisSemantics::attention);
  const auto b = sample_mask(8, 9, StructuralPattern::element, 0.3, 99, AxisSemantics::attention);
  const auto c = sample_mask(8, 9, StructuralPattern::element, 0.3, 100, AxisSemantics::attention);
  CHECK(a.keep == b.keep);
  CHECK(a.keep != c.keep);
}

TEST_CASE("pattern invariants hold over random draws") {
  Rng rng(1234);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t rows = 1 + rng.index(12);
    const std::size_t cols = 2 + rng.index(20);
    const double rate = 0.05 + 0.9 * rng.uniform();
    const auto seed = rng.next();

    const auto col = sample_mask(rows, cols, StructuralPattern::column, rate, seed,
                                 AxisSemantics::attention);
    const auto first = dropped_columns_of_row(col, 0);
    for (std::size_t r = 1; r < rows; ++r) {
      CHECK(dropped_columns_of_row(col, r) == first);
    }
    CHECK(first.size() < cols);

    const auto elem = sample_mask(rows, cols, StructuralPattern::element, rate, seed,
                                  AxisSemantics::attention);
    for (std::size_t r = 0; r < rows; ++r) {
      CHECK(dropped_columns_of_row(elem, r).size() < cols);
    }

    if (span_length(rate, cols) < cols) {
      const auto span = sample_mask(rows, cols, StructuralPattern::span, rate, seed,
                                    AxisSemantics::attention);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto d = dropped_columns_of_row(span, r);
        REQUIRE(d.size() == span_length(rate, cols));
        CHECK(d.back() - d.front() + 1 == d.size());
      }
    }

    const auto tokens = sample_mask(rows + 1, cols, StructuralPattern::span, rate, seed,
                                    AxisSemantics::tokens_by_features);
    std::vector<std::size_t> dropped_rows;
    for (std::size_t r = 0; r <= rows; ++r) {
      const auto d = dropped_columns_of_row(tokens, r);
      CHECK((d.empty() || d.size() == cols));
      if (!d.empty()) {
        dropped_rows.push_back(r);
      }
    }
    REQUIRE(dropped_rows.size() == span_length(rate, rows + 1));
    CHECK(dropped_rows.back() - dropped_rows.front() + 1 == dropped_rows.size());
  }
}

TEST_CASE("fully dropped attention rows are repaired") {
  // rate 0.99 would empty most rows without the repair.
  std::size_t repaired_rows = 0;
  std::size_t repaired_masks = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = sample_mask(6, 3, StructuralPattern::element, 0.99, seed,
                               AxisSemantics::attention);
    for (std::size_t r = 0; r < 6; ++r) {
      const auto dropped = dropped_columns_of_row(m, r).size();
      CHECK(dropped < 3);
      repaired_rows += dropped == 2 ? 1 : 0;
    }
    const auto c = sample_mask(6, 3, StructuralPattern::column, 0.99, seed,
                               AxisSemantics::attention);
    const auto dropped = dropped_columns_of_row(c, 0).size();
    CHECK(dropped < 3);
    repaired_masks += dropped == 2 ? 1 : 0;
  }
  CHECK(repaired_rows > 250);
  CHECK(repaired_masks > 40);
}

TEST_CASE("hidden-state column pattern drops whole features") {
  const auto m = sample_mask(10, 16, StructuralPattern::column, 0.5, 3,
                             AxisSemantics::tokens_by_features);
  const auto first = dropped_columns_of_row(m, 0);
  for (std::size_t r = 1; r < 10; ++r) {
    CHECK(dropped_columns_of_row(m, r) == first);
  }
}

TEST_CASE("mask contract and degeneracy errors") {
  CHECK_THROWS_AS(sample_mask(2, 2, StructuralPattern::element, 1.0, 0, AxisSemantics::attention),
                  ContractError);
  CHECK_THROWS_AS(sample_mask(2, 2, StructuralPattern::element, -0.1, 0, AxisSemantics::attention),
                  ContractError);
  CHECK_THROWS_AS(sample_mask(3, 1, StructuralPattern::column, 0.5, 0, AxisSemantics::attention),
                  DegeneracyError);
  CHECK_THROWS_AS(sample_mask(3, 1, StructuralPattern::span, 0.5, 0, AxisSemantics::attention),
                  DegeneracyError);
  CHECK_THROWS_AS(sample_mask(3, 4, StructuralPattern::span, 0.9, 0, AxisSemantics::attention),
                  DegeneracyError);
  CHECK(parse_pattern("column") == StructuralPattern::column);
  CHECK_THROWS_AS(parse_pattern("rows"), ContractError);
}
