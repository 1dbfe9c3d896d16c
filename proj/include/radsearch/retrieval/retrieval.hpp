#pragma once

// Exact full-scan search over image embeddings, plus the two ablation
// searchers (caption text vectors, raw image encoder vectors).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "radsearch/encoders/checkpoint.hpp"
#include "radsearch/records.hpp"
#include "radsearch/synthdata/synthdata.hpp"

namespace radsearch {

struct IndexMeta {
  std::uint64_t image_id = 0;
  PatientRecord record;
  std::string path;

  friend bool operator==(const IndexMeta&, const IndexMeta&) = default;
};

struct EmbeddingIndex {
  std::vector<std::uint64_t> ids;
  Matrix<float> vectors;  // ids.size() x dim
  std::vector<IndexMeta> meta;  // parallel to ids
  std::string fingerprint;  // checkpoint that produced the rows

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return vectors.cols(); }
  // Throws FormatError on ragged fields or duplicate ids.
  void validate() const;
  const IndexMeta* find(std::uint64_t image_id) const;

  friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;
};

struct ScoredImage {
  std::uint64_t image_id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredImage&, const ScoredImage&) = default;
};

struct RankedResult {
  std::string query;
  std::size_t k = 0;
  std::vector<ScoredImage> items;  // score descending, ties by ascending id
};

// Top-k of (ids[i], scores[i]) under the ranking rule.
std::vector<ScoredImage> top_k(const std::vector<std::uint64_t>& ids, const std::vector<double>& scores,
                               std::size_t k);

// Supplies the stored 8-bit raster for an index entry.
using PixelLoader = std::function<GrayImage8(const ImageEntry&)>;

// Encodes and projects every entry. Rows equal embed_images on the single
// image bit for bit.
EmbeddingIndex build_index(const Model& model, const std::vector<const ImageEntry*>& entries,
                           const PixelLoader& pixels);

// Files: `path` (embedding binary format) and `path + ".tsv"` (metadata,
// first line "#fingerprint=<hex>").
void save_index(const std::string& path, const EmbeddingIndex& index);
EmbeddingIndex load_index(const std::string& path);
std::string index_sidecar_path(const std::string& path);

// Text length, k range and empty-index checks shared by every searcher.
void check_query_args(const std::string& text, std::size_t k, std::size_t index_size);

// Embed `text`, rank the index by cosine. Throws FingerprintError when the
// index dimension differs from the model's shared dimension.
RankedResult query(const std::string& text, std::size_t k, const EmbeddingIndex& index, const Model& model);

// A model and index checked against each other once.
class Retriever {
 public:
  // Throws FingerprintError unless the index was built by `model`.
  Retriever(Model model, EmbeddingIndex index);
  RankedResult query(const std::string& text, std::size_t k) const;
  const EmbeddingIndex& index() const { return index_; }
  const Model& model() const { return model_; }
  const std::string& fingerprint() const { return index_.fingerprint; }

 private:
  Model model_;
  EmbeddingIndex index_;
};

// ---------------------------------------------------------------------------
// Ablations

// Text encoder vectors (pre-projection) of every caption of every image.
// Caption id = image_id * 8 + caption index.
struct CaptionStore {
  std::vector<std::uint64_t> caption_ids;
  std::vector<std::uint64_t> image_ids;  // parallel to caption_ids
  Matrix<float> vectors;

  std::size_t image_count() const;
};

inline std::uint64_t caption_id(std::uint64_t image_id, std::size_t caption_index) {
  return image_id * 8 + caption_index;
}

CaptionStore build_caption_store(const Model& model, const std::vector<const ImageEntry*>& entries);

// Images ranked by their best-matching caption.
RankedResult text_only_query(const std::string& text, std::size_t k, const CaptionStore& store, const Model& model);

// Image encoder vectors (pre-projection).
struct ImageFeatureIndex {
  std::vector<std::uint64_t> ids;
  Matrix<float> vectors;
};

ImageFeatureIndex build_image_features(const Model& encoder, const std::vector<const ImageEntry*>& entries,
                                       const PixelLoader& pixels);

RankedResult image_only_query(const ImageTensor& image, std::size_t k, const ImageFeatureIndex& index,
                              const Model& encoder);

}  // namespace radsearch
