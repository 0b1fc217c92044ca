// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/dropout.hpp"

#include <limits>
#include <string>

#include "hk/errors.hpp"
#include "hk/rng.hpp"

namespace hk {
namespace {

void check_rate(const char* op, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError(std::string(op) + ": rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

// Expands per-slice plans into one keep byte per tensor entry.
std::vector<std::uint8_t> expand_masks(const char* op, const Tensor& x,
                                       std::span<const MaskPlan> masks) {
  if (x.rank() < 2) {
    throw DimensionError(std::string(op) + ": need rank >= 2, got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(-2);
  const std::size_t cols = x.dim(-1);
  const std::size_t slice = rows * cols;
  const std::size_t slices = x.numel() / slice;
  if (masks.size() != slices && masks.size() != 1) {
    throw DimensionError(std::string(op) + ": " + std::to_string(masks.size()) + " masks for " +
                         std::to_string(slices) + " slices of " + shape_str(x.shape()));
  }
  std::vector<std::uint8_t> keep(x.numel());
  for (std::size_t s = 0; s < slices; ++s) {
    const auto& m = masks.size() == 1 ? masks[0] : masks[s];
    if (m.rows != rows || m.cols != cols) {
      throw DimensionError(std::string(op) + ": mask " + std::to_string(m.rows) + "x" +
                           std::to_string(m.cols) + " does not match " + shape_str(x.shape()));
    }
    std::copy(m.keep.begin(), m.keep.end(), keep.begin() + static_cast<std::ptrdiff_t>(s * slice));
  }
  return keep;
}

Tensor scaled_keep_tensor(const Shape& shape, const std::vector<std::uint8_t>& keep, double rate) {
  const double factor = 1.0 / (1.0 - rate);
  std::vector<double> values(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    values[i] = keep[i] ? factor : 0.0;
  }
  return Tensor::from(shape, std::move(values));
}

}  // namespace

std::string_view to_string(DropPosition position) {
  switch (position) {
    case DropPosition::attn_logits:
      return "attn_logits";
    case DropPosition::attn_weights:
      return "attn_weights";
    case DropPosition::ffn_hidden:
      return "ffn_hidden";
    case DropPosition::input_embed:
      return "input_embed";
    case DropPosition::output_repr:
      return "output_repr";
    case DropPosition::none:
      return "none";
  }
  return "none";
}

std::string_view to_string(RescaleMode rescale) {
  switch (rescale) {
    case RescaleMode::normalized:
      return "normalized";
    case RescaleMode::inverted_rate:
      return "inverted_rate";
    case RescaleMode::none:
      return "none";
  }
  return "none";
}

std::string_view to_string(LayerScope scope) {
  return scope == LayerScope::latter_half ? "latter_half" : "all_layers";
}

DropPosition parse_position(std::string_view text) {
  for (auto p : {DropPosition::attn_logits, DropPosition::attn_weights, DropPosition::ffn_hidden,
                 DropPosition::input_embed, DropPosition::output_repr, DropPosition::none}) {
    if (to_string(p) == text) {
      return p;
    }
  }
  throw ContractError("unknown dropout position '" + std::string(text) + "'");
}

RescaleMode parse_rescale(std::string_view text) {
  for (auto r : {RescaleMode::normalized, RescaleMode::inverted_rate, RescaleMode::none}) {
    if (to_string(r) == text) {
      return r;
    }
  }
  throw ContractError("unknown rescale mode '" + std::string(text) + "'");
}

LayerScope parse_scope(std::string_view text) {
  if (text == "all_layers") {
    return LayerScope::all_layers;
  }
  if (text == "latter_half") {
    return LayerScope::latter_half;
  }
  throw ContractError("unknown layer scope '" + std::string(text) + "'");
}

RescaleMode rescale_for(DropPosition position) {
  switch (position) {
    case DropPosition::attn_logits:
    case DropPosition::none:
      return RescaleMode::none;
    case DropPosition::attn_weights:
      return RescaleMode::normalized;
    case DropPosition::ffn_hidden:
    case DropPosition::input_embed:
    case DropPosition::output_repr:
      return RescaleMode::inverted_rate;
  }
  return RescaleMode::none;
}

DropoutSpec DropoutSpec::make(DropPosition position, StructuralPattern pattern, double rate,
                              bool grad_stop, LayerScope scope) {
  DropoutSpec spec;
  spec.position = position;
  spec.pattern = pattern;
  spec.rate = rate;
  spec.rescale = rescale_for(position);
  spec.grad_stop_denominator = grad_stop;
  spec.layer_scope = scope;
  spec.validate();
  return spec;
}

void DropoutSpec::validate() const {
  check_rate("DropoutSpec", rate);
  if (position != DropPosition::none && rescale != rescale_for(position)) {
    throw ContractError("DropoutSpec: position " + std::string(to_string(position)) +
                        " requires rescale " + std::string(to_string(rescale_for(position))) +
                        ", got " + std::string(to_string(rescale)));
  }
  if (grad_stop_denominator && rescale != RescaleMode::normalized) {
    throw ContractError("DropoutSpec: grad_stop_denominator only applies to normalized rescale");
  }
}

bool DropoutSpec::applies_to_layer(std::size_t layer, std::size_t num_layers) const {
  if (layer_scope == LayerScope::all_layers) {
    return true;
  }
  return layer >= (num_layers + 1) / 2;
}

Tensor drop_key(const Tensor& logits, std::span<const MaskPlan> masks) {
  const auto keep = expand_masks("drop_key", logits, masks);
  const std::size_t cols = logits.dim(-1);
  for (std::size_t r = 0; r < keep.size() / cols; ++r) {
    bool any = false;
    for (std::size_t j = 0; j < cols && !any; ++j) {
      any = keep[r * cols + j] != 0;
    }
    if (!any) {
      throw DegeneracyError("drop_key: attention row " + std::to_string(r) + " drops every key");
    }
  }
  return masked_fill(logits, keep, -std::numeric_limits<double>::infinity());
}

Tensor drop_attention(const Tensor& weights, std::span<const MaskPlan> masks, bool grad_stop) {
  const auto keep = expand_masks("drop_attention", weights, masks);
  const Tensor dropped = masked_fill(weights, keep, 0.0);
  Tensor mass = sum_last(dropped);
  for (double v : mass.values()) {
    if (v < 1e-300) {
      throw DegeneracyError("drop_attention: surviving attention mass below 1e-300");
    }
  }
  if (grad_stop) {
    mass = detach(mass);
  }
  return div(dropped, mass);
}

Tensor hidden_cut(const Tensor& h, std::span<const MaskPlan> masks, double rate) {
  check_rate("hidden_cut", rate);
  if (rate == 0.0) {
    return h;
  }
  const auto keep = expand_masks("hidden_cut", h, masks);
  return mul(h, scaled_keep_tensor(h.shape(), keep, rate));
}

Tensor input_cutoff(const Tensor& embeddings, std::span<const MaskPlan> masks, double rate) {
  check_rate("input_cutoff", rate);
  if (rate == 0.0) {
    return embeddings;
  }
  const auto keep = expand_masks("input_cutoff", embeddings, masks);
  return mul(embeddings, scaled_keep_tensor(embeddings.shape(), keep, rate));
}

Tensor output_dropout(const Tensor& repr, double rate, std::uint64_t seed) {
  check_rate("output_dropout", rate);
  if (rate == 0.0) {
    return repr;
  }
  Rng rng(seed);
  std::vector<std::uint8_t> keep(repr.numel());
  for (auto& k : keep) {
    k = rng.bernoulli(rate) ? 0 : 1;
  }
  return mul(repr, scaled_keep_tensor(repr.shape(), keep, rate));
}

}  // namespace hk
