#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "radsearch/image.hpp"
#include "radsearch/records.hpp"

namespace radsearch {

enum class Split;

// canonical term -> synonyms. Lookups are case-insensitive.
class SynonymLexicon {
 public:
  // maxilla/upper jaw, mandible/lower jaw and the six radiograph regions.
  static SynonymLexicon builtin();
  // Lines of "canonical: synonym1 | synonym2"; '#' starts a comment.
  static SynonymLexicon parse(std::string_view text);
  static SynonymLexicon load(const std::string& path);

  void add(std::string_view canonical, std::string_view synonym);
  const std::vector<std::string>* synonyms(std::string_view canonical) const;
  // Canonical form of a term or any of its synonyms.
  std::optional<std::string> canonical_of(std::string_view term) const;
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

struct AugmentConfig {
  double rotation_degrees = 10.0;
  double rotation_jitter_degrees = 0.0;  // seeded, uniform in +-jitter
  double contrast_low = 0.7;
  double contrast_high = 1.3;
};

inline constexpr std::size_t kImageVariants = 5;
inline constexpr std::size_t kCaptionVariants = 6;
inline constexpr std::size_t kPairsPerGroup = kImageVariants * kCaptionVariants;

// Bilinear rotation about the image center with edge padding.
ImageTensor rotate(const ImageTensor& image, double degrees);
// out = clamp(0.5 + factor * (in - 0.5))
ImageTensor adjust_contrast(const ImageTensor& image, double factor);

// [original, +rotation, -rotation, low contrast, high contrast]
std::array<ImageTensor, kImageVariants> augment_image(const ImageTensor& image, std::uint64_t seed,
                                                      const AugmentConfig& config = {});
// One variant by index, without materializing the other four.
ImageTensor image_variant(const ImageTensor& image, std::size_t variant, std::uint64_t seed,
                          const AugmentConfig& config = {});

// The six caption templates: full with jaw term, full with jaw synonym, full
// with position, without age, diagnosis + position, diagnosis only.
std::array<std::string, kCaptionVariants> caption_variants(const PatientRecord& record,
                                                           const SynonymLexicon& lexicon);

struct DerivedPair {
  std::size_t image_variant = 0;
  std::size_t caption_variant = 0;
  ImageTensor image;
  std::string caption;
};

struct PairGroup {
  std::uint64_t origin_id = 0;
  Split split{};
  std::vector<DerivedPair> pairs;  // 5 x 6, image-major
};

PairGroup expand_pair(std::uint64_t origin_id, Split split, const ImageTensor& image, const PatientRecord& record,
                      const SynonymLexicon& lexicon, std::uint64_t seed, const AugmentConfig& config = {});

}  // namespace radsearch
