#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "radsearch/numerics/matrix.hpp"

namespace radsearch {

// Embedding file layout (little-endian):
//   "CLRE" | u32 version (1) | u32 count | u32 dim | count x (u64 id | f32[dim])
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

struct EmbeddingTable {
  std::vector<std::uint64_t> ids;
  Matrix<float> vectors;  // ids.size() x dim

  std::size_t dim() const { return vectors.cols(); }
  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

std::vector<std::uint8_t> encode_embeddings(const EmbeddingTable& table);
// Validates magic, version, length, finiteness and (optionally) the dimension.
EmbeddingTable decode_embeddings(const std::vector<std::uint8_t>& bytes,
                                 std::optional<std::uint32_t> expected_dim = std::nullopt);

void export_embeddings(const std::string& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(const std::string& path, std::optional<std::uint32_t> expected_dim = std::nullopt);

// id -> vector. Duplicate ids are a format error.
std::map<std::uint64_t, std::vector<float>> import_embeddings(
    const std::string& path, std::optional<std::uint32_t> expected_dim = std::nullopt);

}  // namespace radsearch
