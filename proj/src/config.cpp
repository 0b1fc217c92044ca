// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>

#include "hk/errors.hpp"

namespace hk {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::string_view where,
                    std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) {
    throw ContractError("config: '" + std::string(where) + "' must be an object");
  }
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto key : allowed) {
      known = known || item.key() == key;
    }
    if (!known) {
      throw ContractError("config: unknown key '" + item.key() + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ContractError(std::string("config: bad value for '") + key + "': " + e.what());
    }
  }
}

std::string read_string(const json& j, const char* key, std::string_view fallback) {
  std::string value(fallback);
  read(j, key, value);
  return value;
}

}  // namespace

json to_json(const DropoutSpec& spec) {
  return {{"position", to_string(spec.position)},
          {"pattern", to_string(spec.pattern)},
          {"rate", spec.rate},
          {"rescale", to_string(spec.rescale)},
          {"grad_stop_denominator", spec.grad_stop_denominator},
          {"layer_scope", to_string(spec.layer_scope)}};
}

DropoutSpec dropout_spec_from_json(const json& j) {
  reject_unknown(j, "dropout spec",
                 {"position", "pattern", "rate", "rescale", "grad_stop_denominator",
                  "layer_scope"});
  const auto position = parse_position(read_string(j, "position", "none"));
  DropoutSpec spec;
  spec.position = position;
  spec.pattern = parse_pattern(read_string(j, "pattern", "element"));
  read(j, "rate", spec.rate);
  spec.rescale = parse_rescale(read_string(j, "rescale", to_string(rescale_for(position))));
  read(j, "grad_stop_denominator", spec.grad_stop_denominator);
  spec.layer_scope = parse_scope(read_string(j, "layer_scope", "all_layers"));
  spec.validate();
  return spec;
}

json to_json(const CompensationSpec& spec) {
  return {{"kind", to_string(spec.kind)}, {"weight", spec.weight}};
}

CompensationSpec compensation_from_json(const json& j) {
  reject_unknown(j, "compensation", {"kind", "weight"});
  CompensationSpec spec;
  spec.kind = parse_compensation(read_string(j, "kind", "none"));
  read(j, "weight", spec.weight);
  if (!(spec.weight >= 0.0)) {
    throw ContractError("config: compensation weight must be >= 0");
  }
  return spec;
}

json to_json(const ExperimentConfig& c) {
  json specs = json::array();
  for (const auto& s : c.dropout_specs) {
    specs.push_back(to_json(s));
  }
  return {
      {"model",
       {{"num_layers", c.model.num_layers},
        {"d_model", c.model.d_model},
        {"num_heads", c.model.num_heads},
        {"d_ff", c.model.d_ff},
        {"lora_rank", c.model.lora_rank},
        {"lora_alpha", c.model.lora_alpha},
        {"backbone_seed", c.model.backbone_seed}}},
      {"task",
       {{"kind", to_string(c.task.kind)},
        {"vocab_size", c.task.vocab_size},
        {"seq_len", c.task.seq_len},
        {"num_classes", c.task.num_classes},
        {"n_train", c.task.n_train},
        {"n_eval", c.task.n_eval},
        {"label_noise", c.task.label_noise},
        {"data_seed", c.task.data_seed}}},
      {"dropout_specs", specs},
      {"compensation", to_json(c.compensation)},
      {"optimizer",
       {{"learning_rate", c.optimizer.learning_rate},
        {"weight_decay", c.optimizer.weight_decay},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon},
        {"warmup_ratio", c.optimizer.warmup_ratio},
        {"epochs", c.optimizer.epochs},
        {"batch_size", c.optimizer.batch_size},
        {"eval_every", c.optimizer.eval_every}}},
      {"methods",
       {{"attn_rate", c.methods.attn_rate},
        {"ffn_rate", c.methods.ffn_rate},
        {"kl_weight", c.methods.kl_weight}}},
      {"seeds", c.seeds},
      {"logging", {{"wall_time", c.log_wall_time}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, "config",
                 {"model", "task", "dropout_specs", "compensation", "optimizer", "methods", "seeds",
                  "logging"});
  ExperimentConfig c;
  if (auto it = j.find("model"); it != j.end()) {
    reject_unknown(*it, "model",
                   {"num_layers", "d_model", "num_heads", "d_ff", "lora_rank", "lora_alpha",
                    "backbone_seed"});
    read(*it, "num_layers", c.model.num_layers);
    read(*it, "d_model", c.model.d_model);
    read(*it, "num_heads", c.model.num_heads);
    read(*it, "d_ff", c.model.d_ff);
    read(*it, "lora_rank", c.model.lora_rank);
    read(*it, "lora_alpha", c.model.lora_alpha);
    read(*it, "backbone_seed", c.model.backbone_seed);
  }
  if (auto it = j.find("task"); it != j.end()) {
    reject_unknown(*it, "task",
                   {"kind", "vocab_size", "seq_len", "num_classes", "n_train", "n_eval",
                    "label_noise", "data_seed"});
    c.task.kind = parse_task_kind(read_string(*it, "kind", to_string(c.task.kind)));
    read(*it, "vocab_size", c.task.vocab_size);
    read(*it, "seq_len", c.task.seq_len);
    read(*it, "num_classes", c.task.num_classes);
    read(*it, "n_train", c.task.n_train);
    read(*it, "n_eval", c.task.n_eval);
    read(*it, "label_noise", c.task.label_noise);
    read(*it, "data_seed", c.task.data_seed);
  }
  if (auto it = j.find("dropout_specs"); it != j.end()) {
    if (!it->is_array()) {
      throw ContractError("config: 'dropout_specs' must be an array");
    }
    for (const auto& s : *it) {
      c.dropout_specs.push_back(dropout_spec_from_json(s));
    }
  }
  if (auto it = j.find("compensation"); it != j.end()) {
    c.compensation = compensation_from_json(*it);
  }
  if (auto it = j.find("optimizer"); it != j.end()) {
    reject_unknown(*it, "optimizer",
                   {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon", "warmup_ratio",
                    "epochs", "batch_size", "eval_every"});
    read(*it, "learning_rate", c.optimizer.learning_rate);
    read(*it, "weight_decay", c.optimizer.weight_decay);
    read(*it, "beta1", c.optimizer.beta1);
    read(*it, "beta2", c.optimizer.beta2);
    read(*it, "epsilon", c.optimizer.epsilon);
    read(*it, "warmup_ratio", c.optimizer.warmup_ratio);
    read(*it, "epochs", c.optimizer.epochs);
    read(*it, "batch_size", c.optimizer.batch_size);
    read(*it, "eval_every", c.optimizer.eval_every);
  }
  if (auto it = j.find("methods"); it != j.end()) {
    reject_unknown(*it, "methods", {"attn_rate", "ffn_rate", "kl_weight"});
    read(*it, "attn_rate", c.methods.attn_rate);
    read(*it, "ffn_rate", c.methods.ffn_rate);
    read(*it, "kl_weight", c.methods.kl_weight);
  }
  read(j, "seeds", c.seeds);
  if (auto it = j.find("logging"); it != j.end()) {
    reject_unknown(*it, "logging", {"wall_time"});
    read(*it, "wall_time", c.log_wall_time);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config " + path.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ContractError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void ExperimentConfig::validate() const {
  task.validate();
  model_config().validate();
  for (const auto& s : dropout_specs) {
    s.validate();
  }
  const auto& o = optimizer;
  if (!(o.learning_rate >= 0.0) || !(o.weight_decay >= 0.0) || !(o.epsilon > 0.0)) {
    throw ContractError("config: learning_rate and weight_decay must be >= 0, epsilon > 0");
  }
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0)) {
    throw ContractError("config: betas must lie in [0, 1)");
  }
  if (!(o.warmup_ratio >= 0.0 && o.warmup_ratio <= 1.0)) {
    throw ContractError("config: warmup_ratio must lie in [0, 1]");
  }
  if (o.epochs == 0 || o.batch_size == 0 || o.eval_every == 0) {
    throw ContractError("config: epochs, batch_size and eval_every must be positive");
  }
  if (!(compensation.weight >= 0.0)) {
    throw ContractError("config: compensation weight must be >= 0");
  }
  if (seeds.empty()) {
    throw ContractError("config: seeds must not be empty");
  }
}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.num_layers = model.num_layers;
  m.d_model = model.d_model;
  m.num_heads = model.num_heads;
  m.d_ff = model.d_ff;
  m.vocab_size = task.vocab_size;
  m.max_len = task.seq_len;
  m.lora_rank = model.lora_rank;
  m.lora_alpha = model.lora_alpha;
  m.head = task.head();
  m.num_classes = task.outputs();
  m.dropout_specs = dropout_specs;
  m.backbone_seed = model.backbone_seed;
  return m;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string canonical = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MethodBundle hiddenkey_bundle(double rate_attn, double rate_ffn, double kl_weight) {
  if (!(kl_weight >= 0.0)) {
    throw ContractError("hiddenkey_bundle: kl_weight must be >= 0");
  }
  MethodBundle b;
  b.name = kl_weight > 0.0 ? "hiddenkey" : "hiddenkey-";
  b.specs = {DropoutSpec::make(DropPosition::attn_logits, StructuralPattern::column, rate_attn),
             DropoutSpec::make(DropPosition::ffn_hidden, StructuralPattern::element, rate_ffn)};
  for (const auto& s : b.specs) {
    s.validate();
  }
  if (kl_weight > 0.0) {
    b.compensation = {CompensationKind::kl_bidirectional, kl_weight};
  }
  return b;
}

MethodBundle method_bundle(std::string_view name, const MethodRates& rates) {
  MethodBundle b;
  b.name = std::string(name);
  if (name == "baseline") {
    return b;
  }
  if (name == "dropkey") {
    b.specs = {DropoutSpec::make(DropPosition::attn_logits, StructuralPattern::column,
                                 rates.attn_rate)};
  } else if (name == "dropattention") {
    b.specs = {DropoutSpec::make(DropPosition::attn_weights, StructuralPattern::column,
                                 rates.attn_rate, true)};
  } else if (name == "hiddencut") {
    b.specs = {DropoutSpec::make(DropPosition::ffn_hidden, StructuralPattern::element,
                                 rates.ffn_rate)};
  } else if (name == "hiddenkey-") {
    return hiddenkey_bundle(rates.attn_rate, rates.ffn_rate, 0.0);
  } else if (name == "hiddenkey") {
    if (!(rates.kl_weight > 0.0)) {
      throw ContractError("method hiddenkey needs a positive kl_weight");
    }
    return hiddenkey_bundle(rates.attn_rate, rates.ffn_rate, rates.kl_weight);
  } else {
    throw ContractError("unknown method '" + std::string(name) +
                        "' (baseline, dropkey, hiddencut, dropattention, hiddenkey-, hiddenkey)");
  }
  for (const auto& s : b.specs) {
    s.validate();
  }
  return b;
}

ExperimentConfig with_bundle(ExperimentConfig config, const MethodBundle& bundle) {
  config.dropout_specs = bundle.specs;
  config.compensation = bundle.compensation;
  return config;
}

json to_json(const MethodBundle& bundle) {
  json specs = json::array();
  for (const auto& s : bundle.specs) {
    specs.push_back(to_json(s));
  }
  return {{"name", bundle.name}, {"specs", specs}, {"compensation", to_json(bundle.compensation)}};
}

MethodBundle bundle_from_json(const json& j) {
  reject_unknown(j, "bundle", {"name", "specs", "compensation"});
  MethodBundle b;
  b.name = read_string(j, "name", "");
  for (const auto& s : j.at("specs")) {
    b.specs.push_back(dropout_spec_from_json(s));
  }
  b.compensation = compensation_from_json(j.at("compensation"));
  return b;
}

}  // namespace hk
