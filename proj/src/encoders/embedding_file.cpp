#include "radsearch/encoders/embedding_file.hpp"

#include <cmath>

#include "radsearch/binary_io.hpp"

namespace radsearch {

std::vector<std::uint8_t> encode_embeddings(const EmbeddingTable& table) {
  if (table.ids.size() != table.vectors.rows()) {
    throw DimensionError("embedding table has " + std::to_string(table.ids.size()) + " ids for " +
                         std::to_string(table.vectors.rows()) + " vectors");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + table.ids.size() * (8 + 4 * table.dim()));
  bin::put_bytes(out, "CLRE", 4);
  bin::put<std::uint32_t>(out, kEmbeddingFormatVersion);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(table.ids.size()));
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    bin::put<std::uint64_t>(out, table.ids[i]);
    for (float v : table.vectors.row(i)) bin::put<float>(out, v);
  }
  return out;
}

EmbeddingTable decode_embeddings(const std::vector<std::uint8_t>& bytes, std::optional<std::uint32_t> expected_dim) {
  bin::Reader r(bytes, "embedding file");
  if (r.get_string(4, "magic") != "CLRE") r.fail_at(0, "bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kEmbeddingFormatVersion) r.fail_at(4, "unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("count");
  const auto dim = r.get<std::uint32_t>("dim");
  if (expected_dim && dim != *expected_dim) {
    r.fail_at(12, "dimension " + std::to_string(dim) + " does not match expected " + std::to_string(*expected_dim));
  }
  const std::size_t record = 8 + 4 * static_cast<std::size_t>(dim);
  if (r.remaining() != record * count) {
    r.fail("payload is " + std::to_string(r.remaining()) + " bytes, header promises " +
           std::to_string(record * count));
  }
  EmbeddingTable table{std::vector<std::uint64_t>(count), Matrix<float>(count, dim)};
  for (std::size_t i = 0; i < count; ++i) {
    table.ids[i] = r.get<std::uint64_t>("id");
    for (auto& v : table.vectors.row(i)) {
      const std::size_t at = r.offset();
      v = r.get<float>("component");
      if (!std::isfinite(v)) r.fail_at(at, "non-finite component in record " + std::to_string(i));
    }
  }
  return table;
}

void export_embeddings(const std::string& path, const EmbeddingTable& table) {
  bin::write_file(path, encode_embeddings(table));
}

EmbeddingTable read_embeddings(const std::string& path, std::optional<std::uint32_t> expected_dim) {
  return decode_embeddings(bin::read_file(path), expected_dim);
}

std::map<std::uint64_t, std::vector<float>> import_embeddings(const std::string& path,
                                                              std::optional<std::uint32_t> expected_dim) {
  const auto table = read_embeddings(path, expected_dim);
  std::map<std::uint64_t, std::vector<float>> out;
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    auto row = table.vectors.row(i);
    if (!out.emplace(table.ids[i], std::vector<float>(row.begin(), row.end())).second) {
      throw FormatError("embedding file: duplicate id " + std::to_string(table.ids[i]) + " at byte offset " +
                        std::to_string(16 + i * (8 + 4 * table.dim())));
    }
  }
  return out;
}

}  // namespace radsearch
