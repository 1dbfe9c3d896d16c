#include "radsearch/augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "radsearch/encoders/vocabulary.hpp"
#include "radsearch/errors.hpp"
#include "radsearch/synthdata/synthdata.hpp"

namespace radsearch {

ImageTensor rotate(const ImageTensor& image, double degrees) {
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  ImageTensor out(h, w);
  if (h == 0 || w == 0) return out;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double max_y = static_cast<double>(h - 1);
  const double max_x = static_cast<double>(w - 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // inverse map: output pixel -> source coordinate
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sx = std::clamp(c * dx + s * dy + cx, 0.0, max_x);
      const double sy = std::clamp(-s * dx + c * dy + cy, 0.0, max_y);
      const auto x0 = static_cast<std::size_t>(sx);
      const auto y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      for (std::size_t ch = 0; ch < ImageTensor::kChannels; ++ch) {
        const double top = image.at(ch, y0, x0) * (1.0 - fx) + image.at(ch, y0, x1) * fx;
        const double bottom = image.at(ch, y1, x0) * (1.0 - fx) + image.at(ch, y1, x1) * fx;
        out.at(ch, y, x) = static_cast<float>(std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 1.0));
      }
    }
  }
  return out;
}

ImageTensor adjust_contrast(const ImageTensor& image, double factor) {
  ImageTensor out = image;
  for (float& v : out.data()) v = static_cast<float>(std::clamp(0.5 + factor * (static_cast<double>(v) - 0.5), 0.0, 1.0));
  return out;
}

namespace {

double rotation_angle(std::uint64_t seed, bool positive, const AugmentConfig& cfg) {
  double angle = cfg.rotation_degrees;
  if (cfg.rotation_jitter_degrees > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-cfg.rotation_jitter_degrees, cfg.rotation_jitter_degrees);
    const double a = jitter(rng);
    const double b = jitter(rng);
    angle += positive ? a : b;
  }
  return positive ? angle : -angle;
}

}  // namespace

ImageTensor image_variant(const ImageTensor& image, std::size_t variant, std::uint64_t seed,
                          const AugmentConfig& config) {
  switch (variant) {
    case 0: return image;
    case 1: return rotate(image, rotation_angle(seed, true, config));
    case 2: return rotate(image, rotation_angle(seed, false, config));
    case 3: return adjust_contrast(image, config.contrast_low);
    case 4: return adjust_contrast(image, config.contrast_high);
    default: throw RangeError("image variant " + std::to_string(variant) + " out of range [0, 4]");
  }
}

std::array<ImageTensor, kImageVariants> augment_image(const ImageTensor& image, std::uint64_t seed,
                                                      const AugmentConfig& config) {
  return {image_variant(image, 0, seed, config), image_variant(image, 1, seed, config),
          image_variant(image, 2, seed, config), image_variant(image, 3, seed, config),
          image_variant(image, 4, seed, config)};
}

std::array<std::string, kCaptionVariants> caption_variants(const PatientRecord& record,
                                                           const SynonymLexicon& lexicon) {
  const std::string jaw = std::string(jaw_term(region_jaw(record.region)));
  const auto* jaw_synonyms = lexicon.synonyms(jaw);
  if (jaw_synonyms == nullptr || jaw_synonyms->empty()) {
    throw LexiconError("lexicon has no synonym for '" + jaw + "' needed by region '" +
                       std::string(region_name(record.region)) + "'");
  }
  const std::string stage = "Periodontal Stage " + std::string(stage_word(record.stage));
  const std::string who = std::string(ethnicity_name(record.ethnicity)) + " " + std::string(gender_name(record.gender));
  const std::string aged = "A " + std::to_string(record.age) + "-year-old " + who + " with " + stage + " in the ";
  const std::string position = std::string(region_display(record.region));

  std::array<std::string, kCaptionVariants> out = {
      aged + title_case(jaw) + " region.",
      aged + title_case(jaw_synonyms->front()) + " region.",
      aged + position + " region.",
      "A " + who + " with " + stage + " in the " + position + " region.",
      "An Image with " + stage + " in the " + position + ".",
      "An Image with " + stage + ".",
  };
  for (const auto& c : out) {
    if (c.size() > kMaxCaptionChars) throw LengthError("caption exceeds 200 characters: " + c);
  }
  return out;
}

PairGroup expand_pair(std::uint64_t origin_id, Split split, const ImageTensor& image, const PatientRecord& record,
                      const SynonymLexicon& lexicon, std::uint64_t seed, const AugmentConfig& config) {
  const auto images = augment_image(image, seed, config);
  const auto captions = caption_variants(record, lexicon);
  PairGroup group{origin_id, split, {}};
  group.pairs.reserve(kPairsPerGroup);
  for (std::size_t i = 0; i < kImageVariants; ++i)
    for (std::size_t c = 0; c < kCaptionVariants; ++c) group.pairs.push_back({i, c, images[i], captions[c]});
  return group;
}

}  // namespace radsearch
