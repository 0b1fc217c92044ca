// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "hk/errors.hpp"
#include "hk/model.hpp"

namespace hk {
namespace {

constexpr char kMagic[8] = {'H', 'K', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order and must be little-endian");

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::string& config_hash) {
  const auto params = model.parameters();
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["config_hash"] = config_hash;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    manifest["tensors"].push_back({{"name", p.name},
                                   {"shape", p.tensor.shape()},
                                   {"offset", offset},
                                   {"count", p.tensor.numel()},
                                   {"trainable", p.trainable}});
    offset += p.tensor.numel();
  }
  const std::string header = manifest.dump();
  const std::uint64_t header_len = header.size();

  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open checkpoint for writing: " + tmp.string());
    }
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& p : params) {
      const auto v = p.tensor.values();
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) {
      throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string load_checkpoint(Model& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint " + path.string());
  }
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ContractError("not a checkpoint file: " + path.string());
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) {
    throw ContractError("truncated checkpoint manifest: " + path.string());
  }
  const auto manifest = nlohmann::json::parse(header);
  const auto& entries = manifest.at("tensors");
  auto params = model.parameters();
  if (entries.size() != params.size()) {
    throw ContractError("checkpoint holds " + std::to_string(entries.size()) +
                        " tensors, model has " + std::to_string(params.size()));
  }
  std::vector<std::vector<double>> payload;
  payload.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    const auto shape = e.at("shape").get<Shape>();
    if (e.at("name").get<std::string>() != params[i].name || shape != params[i].tensor.shape()) {
      throw ContractError("checkpoint tensor " + e.at("name").get<std::string>() + " " +
                          shape_str(shape) + " does not match model parameter " +
                          params[i].name + " " + shape_str(params[i].tensor.shape()));
    }
    std::vector<double> values(params[i].tensor.numel());
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) {
      throw ContractError("truncated checkpoint payload at " + params[i].name);
    }
    payload.push_back(std::move(values));
  }
  // Only touch the model once the whole file has been validated.
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_values();
    std::copy(payload[i].begin(), payload[i].end(), dst.begin());
  }
  return manifest.at("config_hash").get<std::string>();
}

}  // namespace hk
