// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Structured keep/drop masks over 2-D grids.
//
// Attention grids are laid out like the logits they mask: one row per query,
// one column per key. A dropped column therefore removes one key for every
// query. Hidden-state grids are tokens x features.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hk {

enum class StructuralPattern { element, column, span };

enum class AxisSemantics {
  attention,           // rows = queries, cols = keys
  tokens_by_features,  // rows = sequence positions, cols = hidden units
};

std::string_view to_string(StructuralPattern pattern);
StructuralPattern parse_pattern(std::string_view text);

struct MaskPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> keep;  // row-major, 1 = keep
  StructuralPattern pattern = StructuralPattern::element;
  double rate = 0.0;
  std::uint64_t seed = 0;
  AxisSemantics axes = AxisSemantics::attention;

  bool kept(std::size_t r, std::size_t c) const { return keep[r * cols + c] != 0; }
  std::size_t size() const { return keep.size(); }
};

/// Length of the dropped run of a span mask along an axis of `extent` cells.
std::size_t span_length(double rate, std::size_t extent);

/// Samples a mask; a pure function of its arguments.
///
///   element  i.i.d. drops with probability `rate`.
///   column   whole columns dropped i.i.d. with probability `rate`.
///   span     one contiguous run of span_length() cells, start uniform. It runs
///            over key columns on attention grids and over token rows on
///            tokens_by_features grids.
///
/// On attention grids a query row is never left without a key: an all-drop
/// element row keeps one uniformly chosen key, and if every column of a column
/// mask is dropped one uniformly chosen column is restored. A span that would
/// cover every key, and column/span masks on a single-key grid with rate > 0,
/// are DegeneracyErrors. rate outside [0, 1) is a ContractError.
MaskPlan sample_mask(std::size_t rows, std::size_t cols, StructuralPattern pattern, double rate,
                     std::uint64_t seed, AxisSemantics axes);

MaskPlan all_keep(std::size_t rows, std::size_t cols, AxisSemantics axes);

/// Exact fraction of kept cells.
double kept_fraction(const MaskPlan& mask);

}  // namespace hk
