// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy post-LN transformer encoder with LoRA adapters on the key and value
// projections and a dropout hook at every framework position.
//
// The backbone is drawn from `backbone_seed` and frozen; only the adapters
// (A, B) and the task head train. Pooling takes the first token.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hk/dropout.hpp"
#include "hk/mask.hpp"
#include "hk/tensor.hpp"

namespace hk {

struct LoRALinear {
  Tensor base;  // [out, in], frozen
  Tensor a;     // [rank, in]
  Tensor b;     // [out, rank], zero at init
  std::size_t rank = 0;
  double alpha = 0.0;

  double scaling() const { return alpha / static_cast<double>(rank); }
  /// x W0^T + (alpha / r) (x A^T) B^T
  Tensor forward(const Tensor& x) const;
};

enum class HeadKind { classifier, regressor };

struct ModelConfig {
  std::size_t num_layers = 4;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 32;
  std::size_t max_len = 32;
  std::size_t lora_rank = 8;
  double lora_alpha = 16.0;
  HeadKind head = HeadKind::classifier;
  std::size_t num_classes = 4;
  std::vector<DropoutSpec> dropout_specs;
  std::uint64_t backbone_seed = 0x5eedba5eULL;

  std::size_t d_head() const { return d_model / num_heads; }
  std::size_t head_outputs() const { return head == HeadKind::classifier ? num_classes : 1; }
  /// ContractError on inconsistent extents, rank 0, or two specs at one position.
  void validate() const;
  /// The spec for `position`, or nullptr.
  const DropoutSpec* spec_for(DropPosition position) const;
};

/// A + B of every adapter plus the head: 2 L (r d + d r) + head.
std::size_t trainable_parameter_count(const ModelConfig& config);

enum class Mode { train, infer };

struct MaskRequest {
  std::uint64_t step_seed = 0;
  std::size_t layer = 0;
  std::size_t batch = 0;
  std::size_t head = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  AxisSemantics axes = AxisSemantics::attention;
  const DropoutSpec* spec = nullptr;
};

using MaskProvider = std::function<MaskPlan(const MaskRequest&)>;

/// Seed = hash(step_seed, layer, batch element, head, position).
std::uint64_t mask_seed(const MaskRequest& request);
/// sample_mask() at mask_seed(); what the model uses unless overridden.
MaskPlan default_mask(const MaskRequest& request);

struct ForwardOptions {
  Mode mode = Mode::infer;
  std::uint64_t step_seed = 0;
  bool trace = false;
  /// Test hook; empty means default_mask.
  MaskProvider masks;
};

struct ForwardTrace {
  /// Class probabilities [B, C] or predictions [B].
  Tensor output;
  /// First-token representation after the last layer (and output dropout).
  Tensor pooled;
  std::vector<Tensor> logits_per_layer;   // [B, H, L, L] after drop_key
  std::vector<Tensor> weights_per_layer;  // [B, H, L, L] after drop_attention
  std::vector<Tensor> hidden_per_layer;   // [B, L, d_ff] after hidden_cut
};

struct TokenBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<int> ids;  // batch * len, row-major
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
  bool trainable = false;
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t adapter_seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }

  ForwardTrace forward(const TokenBatch& tokens, const ForwardOptions& options) const;
  /// Q from the frozen projection, K and V through LoRA, scaled dot-product
  /// attention with drop_key / drop_attention hooks, output projection,
  /// residual and layer norm. x is [B, L, d_model].
  Tensor attention_block(const Tensor& x, std::size_t layer, const ForwardOptions& options,
                         ForwardTrace* trace = nullptr) const;
  /// linear -> GELU -> hidden_cut -> linear, residual and layer norm.
  Tensor ffn_block(const Tensor& x, std::size_t layer, const ForwardOptions& options,
                   ForwardTrace* trace = nullptr) const;

  /// Every parameter in a fixed order, keyed by path.
  std::vector<NamedParameter> parameters() const;
  std::vector<NamedParameter> trainable_parameters() const;
  std::size_t trainable_count() const;
  std::size_t total_count() const;

  const LoRALinear& key_adapter(std::size_t layer) const { return layers_.at(layer).wk; }
  const LoRALinear& value_adapter(std::size_t layer) const { return layers_.at(layer).wv; }

 private:
  struct Layer {
    Tensor wq;
    LoRALinear wk;
    LoRALinear wv;
    Tensor wo;
    Tensor ln1_gain, ln1_bias;
    Tensor w1, b1, w2, b2;
    Tensor ln2_gain, ln2_bias;
  };

  const DropoutSpec* active_spec(DropPosition position, std::size_t layer,
                                 const ForwardOptions& options) const;
  std::vector<MaskPlan> masks_for(const DropoutSpec& spec, std::size_t layer, std::size_t batch,
                                  std::size_t heads, std::size_t rows, std::size_t cols,
                                  AxisSemantics axes, const ForwardOptions& options) const;

  ModelConfig config_;
  Tensor token_embedding_;     // [V, d]
  Tensor position_embedding_;  // [max_len, d]
  std::vector<Layer> layers_;
  Tensor head_weight_;  // [C or 1, d]
  Tensor head_bias_;    // [C or 1]
};

/// Writes every parameter, bit-exact, under a JSON manifest.
///
/// Layout: the 8 bytes "HKCKPT01", a little-endian u64 manifest length, the
/// manifest {"format", "config_hash", "tensors": [{name, shape, offset,
/// count}]}, then the float64 payload in manifest order.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::string& config_hash);

/// Restores parameters in place and returns the stored config hash. Names and
/// shapes must match the model exactly.
std::string load_checkpoint(Model& model, const std::filesystem::path& path);

}  // namespace hk
