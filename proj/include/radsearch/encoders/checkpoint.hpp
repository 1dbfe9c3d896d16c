#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radsearch/encoders/model.hpp"

namespace radsearch {

using Model = DualEncoder<float>;

// Checkpoint container (all integers little-endian):
//   "CLRC" | u32 version | u32 config_len | config JSON (model config + vocab)
//   | u32 param_count | param_count x (u32 name_len | name | u32 rows | u32 cols | f32[rows*cols])
inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

// Lowercase hex SHA-256.
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string checkpoint_fingerprint(const Model& model);

}  // namespace radsearch
