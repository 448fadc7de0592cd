// SPDX-License-Identifier: Apache-2.0
//
// Model container:
//
//   "GRCN"                      4-byte magic
//   u32 version                 currently 1
//   u32 metadata length, bytes  UTF-8 JSON: input_shape, layers, tensor
//                               count, plus caller-supplied fields
//   per tensor:
//     u32 name length, bytes
//     u32 rank
//     u64 dims[rank]
//     f64 values[product(dims)]
//
// All integers and floats are little-endian.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "stutter/model.hpp"

namespace stutter {

inline constexpr std::uint32_t kModelFormatVersion = 1;

nlohmann::json layer_to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const nlohmann::json& j);

/// `extra` is merged into the metadata object under the key "extra".
std::vector<std::uint8_t> serialize(const ModelGraph& model, const nlohmann::json& extra = nlohmann::json::object());

struct LoadedModel {
  ModelGraph model;
  nlohmann::json extra;
};

/// Throws CorruptModel on bad magic, unsupported version, truncation, or any
/// disagreement between metadata and tensors.
LoadedModel deserialize(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const ModelGraph& model,
                const nlohmann::json& extra = nlohmann::json::object());
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace stutter
