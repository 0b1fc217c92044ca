// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/model.hpp"

#include <cmath>
#include <string>

#include "hk/errors.hpp"
#include "hk/rng.hpp"

namespace hk {
namespace {

Tensor random_normal(Rng& rng, Shape shape, double stddev, bool trainable) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    x = rng.normal(0.0, stddev);
  }
  return Tensor::from(std::move(shape), std::move(v), trainable);
}

constexpr std::uint64_t position_code(DropPosition p) { return static_cast<std::uint64_t>(p) + 1; }

}  // namespace

Tensor LoRALinear::forward(const Tensor& x) const {
  return add(linear(x, base), scale(linear(linear(x, a), b), scaling()));
}

void ModelConfig::validate() const {
  if (num_layers == 0 || d_model == 0 || num_heads == 0 || d_ff == 0 || vocab_size == 0 ||
      max_len == 0) {
    throw ContractError("ModelConfig: all extents must be positive");
  }
  if (d_model % num_heads != 0) {
    throw ContractError("ModelConfig: d_model " + std::to_string(d_model) +
                        " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (lora_rank == 0) {
    throw ContractError("ModelConfig: lora_rank must be at least 1");
  }
  if (head == HeadKind::classifier && num_classes < 2) {
    throw ContractError("ModelConfig: a classifier needs at least two classes");
  }
  for (std::size_t i = 0; i < dropout_specs.size(); ++i) {
    dropout_specs[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (dropout_specs[i].position == dropout_specs[j].position &&
          dropout_specs[i].position != DropPosition::none) {
        throw ContractError("ModelConfig: duplicate dropout spec for position " +
                            std::string(to_string(dropout_specs[i].position)));
      }
    }
  }
}

const DropoutSpec* ModelConfig::spec_for(DropPosition position) const {
  for (const auto& s : dropout_specs) {
    if (s.position == position) {
      return &s;
    }
  }
  return nullptr;
}

std::size_t trainable_parameter_count(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  const std::size_t r = config.lora_rank;
  const std::size_t adapters = 2 * config.num_layers * (r * d + d * r);
  const std::size_t head = config.head_outputs() * d + config.head_outputs();
  return adapters + head;
}

std::uint64_t mask_seed(const MaskRequest& request) {
  const auto position = request.spec ? request.spec->position : DropPosition::none;
  return derive_seed({request.step_seed, request.layer, request.batch, request.head,
                      position_code(position)});
}

MaskPlan default_mask(const MaskRequest& request) {
  if (request.spec == nullptr) {
    throw ContractError("default_mask: request without a dropout spec");
  }
  return sample_mask(request.rows, request.cols, request.spec->pattern, request.spec->rate,
                     mask_seed(request), request.axes);
}

Model::Model(ModelConfig config, std::uint64_t adapter_seed) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.d_model;
  const std::size_t f = config_.d_ff;
  const std::size_t r = config_.lora_rank;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double inv_sqrt_f = 1.0 / std::sqrt(static_cast<double>(f));

  Rng backbone(config_.backbone_seed);
  Rng adapters(derive_seed({adapter_seed, 0xada97e5ULL}));
  token_embedding_ = random_normal(backbone, {config_.vocab_size, d}, 1.0, false);
  position_embedding_ = random_normal(backbone, {config_.max_len, d}, 1.0, false);
  layers_.resize(config_.num_layers);
  for (auto& layer : layers_) {
    layer.wq = random_normal(backbone, {d, d}, inv_sqrt_d, false);
    layer.wk.base = random_normal(backbone, {d, d}, inv_sqrt_d, false);
    layer.wv.base = random_normal(backbone, {d, d}, inv_sqrt_d, false);
    layer.wo = random_normal(backbone, {d, d}, inv_sqrt_d, false);
    layer.w1 = random_normal(backbone, {f, d}, inv_sqrt_d, false);
    layer.b1 = Tensor::zeros({f});
    layer.w2 = random_normal(backbone, {d, f}, inv_sqrt_f, false);
    layer.b2 = Tensor::zeros({d});
    layer.ln1_gain = Tensor::full({d}, 1.0);
    layer.ln1_bias = Tensor::zeros({d});
    layer.ln2_gain = Tensor::full({d}, 1.0);
    layer.ln2_bias = Tensor::zeros({d});
    for (LoRALinear* lora : {&layer.wk, &layer.wv}) {
      lora->rank = r;
      lora->alpha = config_.lora_alpha;
      lora->a = random_normal(adapters, {r, d}, 0.02, true);
      lora->b = Tensor::zeros({d, r}, true);
    }
  }
  const std::size_t outputs = config_.head_outputs();
  head_weight_ = random_normal(adapters, {outputs, d}, 0.02, true);
  head_bias_ = Tensor::zeros({outputs}, true);
}

const DropoutSpec* Model::active_spec(DropPosition position, std::size_t layer,
                                      const ForwardOptions& options) const {
  if (options.mode != Mode::train) {
    return nullptr;
  }
  const DropoutSpec* spec = config_.spec_for(position);
  if (spec == nullptr || !spec->active()) {
    return nullptr;
  }
  const bool per_layer = position == DropPosition::attn_logits ||
                         position == DropPosition::attn_weights ||
                         position == DropPosition::ffn_hidden;
  if (per_layer && !spec->applies_to_layer(layer, config_.num_layers)) {
    return nullptr;
  }
  return spec;
}

std::vector<MaskPlan> Model::masks_for(const DropoutSpec& spec, std::size_t layer,
                                       std::size_t batch, std::size_t heads, std::size_t rows,
                                       std::size_t cols, AxisSemantics axes,
                                       const ForwardOptions& options) const {
  std::vector<MaskPlan> masks;
  masks.reserve(batch * heads);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      MaskRequest req{options.step_seed, layer, b, h, rows, cols, axes, &spec};
      masks.push_back(options.masks ? options.masks(req) : default_mask(req));
    }
  }
  return masks;
}

Tensor Model::attention_block(const Tensor& x, std::size_t layer, const ForwardOptions& options,
                              ForwardTrace* trace) const {
  const auto& p = layers_.at(layer);
  const std::size_t batch = x.dim(0);
  const std::size_t len = x.dim(1);
  const std::size_t heads = config_.num_heads;

  const Tensor q = split_heads(linear(x, p.wq), heads);
  const Tensor k = split_heads(p.wk.forward(x), heads);
  const Tensor v = split_heads(p.wv.forward(x), heads);
  Tensor logits = scale(matmul_bt(q, k), 1.0 / std::sqrt(static_cast<double>(config_.d_head())));
  if (const auto* spec = active_spec(DropPosition::attn_logits, layer, options)) {
    const auto masks =
        masks_for(*spec, layer, batch, heads, len, len, AxisSemantics::attention, options);
    logits = drop_key(logits, masks);
  }
  Tensor weights = softmax_row(logits);
  if (const auto* spec = active_spec(DropPosition::attn_weights, layer, options)) {
    const auto masks =
        masks_for(*spec, layer, batch, heads, len, len, AxisSemantics::attention, options);
    weights = drop_attention(weights, masks, spec->grad_stop_denominator);
  }
  if (trace != nullptr && options.trace) {
    trace->logits_per_layer.push_back(logits);
    trace->weights_per_layer.push_back(weights);
  }
  const Tensor context = merge_heads(matmul(weights, v));
  return layer_norm(add(x, linear(context, p.wo)), p.ln1_gain, p.ln1_bias);
}

Tensor Model::ffn_block(const Tensor& x, std::size_t layer, const ForwardOptions& options,
                        ForwardTrace* trace) const {
  const auto& p = layers_.at(layer);
  Tensor hidden = gelu(add(linear(x, p.w1), p.b1));
  if (const auto* spec = active_spec(DropPosition::ffn_hidden, layer, options)) {
    const auto masks = masks_for(*spec, layer, x.dim(0), 1, x.dim(1), config_.d_ff,
                                 AxisSemantics::tokens_by_features, options);
    hidden = hidden_cut(hidden, masks, spec->rate);
  }
  if (trace != nullptr && options.trace) {
    trace->hidden_per_layer.push_back(hidden);
  }
  const Tensor out = add(linear(hidden, p.w2), p.b2);
  return layer_norm(add(x, out), p.ln2_gain, p.ln2_bias);
}

ForwardTrace Model::forward(const TokenBatch& tokens, const ForwardOptions& options) const {
  if (tokens.batch == 0 || tokens.len == 0 || tokens.ids.size() != tokens.batch * tokens.len) {
    throw ContractError("Model::forward: malformed token batch");
  }
  if (tokens.len > config_.max_len) {
    throw ContractError("Model::forward: sequence length " + std::to_string(tokens.len) +
                        " exceeds max_len " + std::to_string(config_.max_len));
  }
  for (int id : tokens.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw ContractError("Model::forward: token id " + std::to_string(id) +
                          " outside vocabulary");
    }
  }
  const std::size_t d = config_.d_model;
  const auto pos = position_embedding_.values();
  const Tensor positions =
      Tensor::from({tokens.len, d}, std::vector<double>(pos.begin(), pos.begin() +
                                                        static_cast<std::ptrdiff_t>(tokens.len * d)));
  Tensor x = add(embedding(token_embedding_, tokens.ids, tokens.batch, tokens.len), positions);
  const std::size_t last_layer = config_.num_layers;
  if (const auto* spec = active_spec(DropPosition::input_embed, 0, options)) {
    const auto masks = masks_for(*spec, last_layer + 1, tokens.batch, 1, tokens.len, d,
                                 AxisSemantics::tokens_by_features, options);
    x = input_cutoff(x, masks, spec->rate);
  }

  ForwardTrace trace;
  for (std::size_t layer = 0; layer < config_.num_layers; ++layer) {
    x = attention_block(x, layer, options, &trace);
    x = ffn_block(x, layer, options, &trace);
  }
  Tensor pooled = select_token(x, 0);
  if (const auto* spec = active_spec(DropPosition::output_repr, last_layer, options)) {
    MaskRequest req{options.step_seed, last_layer, 0, 0, tokens.batch, d,
                    AxisSemantics::tokens_by_features, spec};
    pooled = output_dropout(pooled, spec->rate, mask_seed(req));
  }
  const Tensor scores = add(linear(pooled, head_weight_), head_bias_);
  if (config_.head == HeadKind::classifier) {
    trace.output = softmax_row(scores);
  } else {
    trace.output = reshape(scores, {tokens.batch});
  }
  trace.pooled = pooled;
  return trace;
}

std::vector<NamedParameter> Model::parameters() const {
  std::vector<NamedParameter> out;
  out.push_back({"embed.token", token_embedding_, false});
  out.push_back({"embed.position", position_embedding_, false});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.push_back({p + "attn.q.weight", l.wq, false});
    out.push_back({p + "attn.k.base", l.wk.base, false});
    out.push_back({p + "attn.k.lora_a", l.wk.a, true});
    out.push_back({p + "attn.k.lora_b", l.wk.b, true});
    out.push_back({p + "attn.v.base", l.wv.base, false});
    out.push_back({p + "attn.v.lora_a", l.wv.a, true});
    out.push_back({p + "attn.v.lora_b", l.wv.b, true});
    out.push_back({p + "attn.o.weight", l.wo, false});
    out.push_back({p + "attn.norm.gain", l.ln1_gain, false});
    out.push_back({p + "attn.norm.bias", l.ln1_bias, false});
    out.push_back({p + "ffn.up.weight", l.w1, false});
    out.push_back({p + "ffn.up.bias", l.b1, false});
    out.push_back({p + "ffn.down.weight", l.w2, false});
    out.push_back({p + "ffn.down.bias", l.b2, false});
    out.push_back({p + "ffn.norm.gain", l.ln2_gain, false});
    out.push_back({p + "ffn.norm.bias", l.ln2_bias, false});
  }
  out.push_back({"head.weight", head_weight_, true});
  out.push_back({"head.bias", head_bias_, true});
  return out;
}

std::vector<NamedParameter> Model::trainable_parameters() const {
  std::vector<NamedParameter> out;
  for (auto& p : parameters()) {
    if (p.trainable) {
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::size_t Model::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : trainable_parameters()) {
    n += p.tensor.numel();
  }
  return n;
}

std::size_t Model::total_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) {
    n += p.tensor.numel();
  }
  return n;
}

}  // namespace hk
