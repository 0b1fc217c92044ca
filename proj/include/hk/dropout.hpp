// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dropout at the five framework positions. The ops are pure: callers decide
// whether they run (training) or not (inference) and supply the masks.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "hk/mask.hpp"
#include "hk/tensor.hpp"

namespace hk {

enum class DropPosition { attn_logits, attn_weights, ffn_hidden, input_embed, output_repr, none };
enum class RescaleMode { normalized, inverted_rate, none };
enum class LayerScope { all_layers, latter_half };

std::string_view to_string(DropPosition position);
std::string_view to_string(RescaleMode rescale);
std::string_view to_string(LayerScope scope);
DropPosition parse_position(std::string_view text);
RescaleMode parse_rescale(std::string_view text);
LayerScope parse_scope(std::string_view text);

/// The rescale each position uses: none for logits (softmax renormalizes),
/// normalized for weights, 1/(1-p) for hidden states, inputs and outputs.
RescaleMode rescale_for(DropPosition position);

struct DropoutSpec {
  DropPosition position = DropPosition::none;
  StructuralPattern pattern = StructuralPattern::element;
  double rate = 0.0;
  RescaleMode rescale = RescaleMode::none;
  bool grad_stop_denominator = false;
  LayerScope layer_scope = LayerScope::all_layers;

  /// Builds a spec with the rescale its position requires.
  static DropoutSpec make(DropPosition position, StructuralPattern pattern, double rate,
                          bool grad_stop = false, LayerScope scope = LayerScope::all_layers);

  /// ContractError on an out-of-range rate or a rescale/position mismatch.
  void validate() const;
  bool active() const { return position != DropPosition::none && rate > 0.0; }
  /// latter_half covers layers with index >= ceil(num_layers / 2).
  bool applies_to_layer(std::size_t layer, std::size_t num_layers) const;

  bool operator==(const DropoutSpec&) const = default;
};

/// Sets masked logits to -inf. `masks` holds one Q x K plan per leading slice
/// of logits[..., Q, K], or a single plan shared by all slices.
Tensor drop_key(const Tensor& logits, std::span<const MaskPlan> masks);

/// Zeroes masked weights, then divides each row by its surviving mass. With
/// grad_stop the denominator is detached from the graph.
Tensor drop_attention(const Tensor& weights, std::span<const MaskPlan> masks, bool grad_stop);

/// Zeroes masked hidden entries of h[..., L, D] and scales the rest by
/// 1/(1 - rate).
Tensor hidden_cut(const Tensor& h, std::span<const MaskPlan> masks, double rate);

/// hidden_cut applied to token embeddings.
Tensor input_cutoff(const Tensor& embeddings, std::span<const MaskPlan> masks, double rate);

/// Element dropout with 1/(1 - rate) rescale; the mask is drawn from `seed`.
Tensor output_dropout(const Tensor& repr, double rate, std::uint64_t seed);

}  // namespace hk
