// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/mask.hpp"

#include <algorithm>
#include <cmath>

#include "hk/errors.hpp"
#include "hk/rng.hpp"

namespace hk {

std::string_view to_string(StructuralPattern pattern) {
  switch (pattern) {
    case StructuralPattern::element:
      return "element";
    case StructuralPattern::column:
      return "column";
    case StructuralPattern::span:
      return "span";
  }
  return "element";
}

StructuralPattern parse_pattern(std::string_view text) {
  if (text == "element") {
    return StructuralPattern::element;
  }
  if (text == "column") {
    return StructuralPattern::column;
  }
  if (text == "span") {
    return StructuralPattern::span;
  }
  throw ContractError("unknown structural pattern '" + std::string(text) + "'");
}

std::size_t span_length(double rate, std::size_t extent) {
  const auto rounded = static_cast<std::size_t>(std::llround(rate * static_cast<double>(extent)));
  return std::max<std::size_t>(1, rounded);
}

MaskPlan all_keep(std::size_t rows, std::size_t cols, AxisSemantics axes) {
  MaskPlan plan;
  plan.rows = rows;
  plan.cols = cols;
  plan.keep.assign(rows * cols, 1);
  plan.axes = axes;
  return plan;
}

MaskPlan sample_mask(std::size_t rows, std::size_t cols, StructuralPattern pattern, double rate,
                     std::uint64_t seed, AxisSemantics axes) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError("sample_mask: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (rows == 0 || cols == 0) {
    throw ContractError("sample_mask: grid must be at least 1x1");
  }
  MaskPlan plan = all_keep(rows, cols, axes);
  plan.pattern = pattern;
  plan.rate = rate;
  plan.seed = seed;
  if (rate == 0.0) {
    return plan;
  }
  const bool attention = axes == AxisSemantics::attention;
  if (attention && cols == 1 && pattern != StructuralPattern::element) {
    throw DegeneracyError("sample_mask: " + std::string(to_string(pattern)) +
                          " dropout on a single-key attention grid drops every key");
  }

  Rng rng(seed);
  auto& keep = plan.keep;
  switch (pattern) {
    case StructuralPattern::element:
      for (auto& k : keep) {
        k = rng.bernoulli(rate) ? 0 : 1;
      }
      if (attention) {
        for (std::size_t r = 0; r < rows; ++r) {
          auto row = keep.begin() + static_cast<std::ptrdiff_t>(r * cols);
          if (std::none_of(row, row + static_cast<std::ptrdiff_t>(cols),
                           [](std::uint8_t v) { return v != 0; })) {
            row[static_cast<std::ptrdiff_t>(rng.index(cols))] = 1;
          }
        }
      }
      break;
    case StructuralPattern::column: {
      std::vector<std::uint8_t> col_keep(cols);
      for (auto& k : col_keep) {
        k = rng.bernoulli(rate) ? 0 : 1;
      }
      if (attention && std::none_of(col_keep.begin(), col_keep.end(),
                                    [](std::uint8_t v) { return v != 0; })) {
        col_keep[rng.index(cols)] = 1;
      }
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(col_keep.begin(), col_keep.end(),
                  keep.begin() + static_cast<std::ptrdiff_t>(r * cols));
      }
      break;
    }
    case StructuralPattern::span: {
      if (attention) {
        const std::size_t len = span_length(rate, cols);
        if (len >= cols) {
          throw DegeneracyError("sample_mask: span of " + std::to_string(len) +
                                " keys covers the whole attention row");
        }
        const std::size_t start = rng.index(cols - len + 1);
        for (std::size_t r = 0; r < rows; ++r) {
          std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(r * cols + start), len, 0);
        }
      } else {
        const std::size_t len = std::min(span_length(rate, rows), rows);
        const std::size_t start = rng.index(rows - len + 1);
        std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(start * cols), len * cols, 0);
      }
      break;
    }
  }
  return plan;
}

double kept_fraction(const MaskPlan& mask) {
  if (mask.keep.empty()) {
    return 1.0;
  }
  const auto kept = std::count(mask.keep.begin(), mask.keep.end(), std::uint8_t{1});
  return static_cast<double>(kept) / static_cast<double>(mask.keep.size());
}

}  // namespace hk
