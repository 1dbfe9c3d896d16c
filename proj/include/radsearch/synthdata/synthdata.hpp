#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "radsearch/image.hpp"
#include "radsearch/records.hpp"

namespace radsearch {

class SynonymLexicon;

// Periodontal stage from radiographic bone loss: <15 -> 1, [15, 33] -> 2, >33 -> 3.
int stage_from_rbl(double rbl_percent);

// ---------------------------------------------------------------------------
// Renderer

// Fixed vertical layout of the synthetic radiograph (224 x 224 canvas). The
// bone-loss band starts at the cemento-enamel junction row and extends
// rbl% of the root length toward the apex.
struct RenderGeometry {
  static constexpr std::size_t kSize = 224;
  static constexpr std::size_t kCrownTop = 20;
  static constexpr std::size_t kCejRow = 70;
  static constexpr std::size_t kApexRow = 190;
  static constexpr std::size_t kRootLength = kApexRow - kCejRow;
  // Region fiducial occupies [kFiducialOrigin, kFiducialOrigin + kFiducialExtent)^2.
  static constexpr std::size_t kFiducialOrigin = 3;
  static constexpr std::size_t kFiducialExtent = 26;
};

ImageTensor render_image(const PatientRecord& record, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Corpus

enum class Split { kTrain, kValidation, kTest };
std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct ImageEntry {
  std::uint64_t image_id = 0;
  std::string path;  // relative to the dataset root
  Split split = Split::kTrain;
  PatientRecord record;
  std::vector<std::string> captions;  // the six caption variants

  friend bool operator==(const ImageEntry&, const ImageEntry&) = default;
};

struct SplitCounts {
  std::size_t patients[3] = {0, 0, 0};
  std::size_t images[3] = {0, 0, 0};
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<ImageEntry> entries;

  SplitCounts counts() const;
  std::vector<const ImageEntry*> split(Split s) const;
  const ImageEntry* find(std::uint64_t image_id) const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.seed == b.seed && a.entries == b.entries;
  }
};

struct CorpusConfig {
  std::size_t n_patients = 60;
  std::size_t min_images_per_patient = 10;
  std::size_t max_images_per_patient = 16;
  std::uint64_t seed = 7;
  std::array<double, 3> stage_probabilities = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  int min_age = 18;
  int max_age = 85;

  static CorpusConfig desk();
  static CorpusConfig paper_scale();  // 45 patients, ~687 images
};

// Patient-level 80/10/10 split by largest remainder; each split gets at least
// one patient. Returns the split for each patient index.
std::vector<Split> assign_splits(std::size_t n_patients, std::uint64_t seed);

// Records, captions and split tags, without pixels.
DatasetManifest generate_manifest(const CorpusConfig& config, const SynonymLexicon& lexicon);

// Deterministic per-image render seed.
std::uint64_t image_seed(std::uint64_t corpus_seed, std::uint64_t image_id);

struct Corpus {
  DatasetManifest manifest;
  std::vector<GrayImage8> images;  // parallel to manifest.entries
};

Corpus generate_corpus(const CorpusConfig& config, const SynonymLexicon& lexicon);

// ---------------------------------------------------------------------------
// Annotators

struct AnnotationSet {
  std::uint64_t image_id = 0;
  std::array<int, 3> labels{};
  int resolved = 0;
};

// Majority of three; when all three differ, annotator 3 (index 2) decides.
int majority_vote(const std::array<int, 3>& labels);

// Each annotator reports the true stage with its reliability, otherwise one of
// the two wrong stages uniformly. Reliabilities must lie in (1/3, 1].
AnnotationSet simulate_annotators(std::uint64_t image_id, const PatientRecord& record,
                                  const std::array<double, 3>& reliabilities, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// On-disk layout: <root>/manifest.jsonl + <root>/images/*.png

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);
void write_corpus(const std::string& root, const Corpus& corpus);
Corpus read_corpus(const std::string& root);

void write_png(const std::string& path, const GrayImage8& image);
GrayImage8 read_png(const std::string& path);

}  // namespace radsearch
