#include <algorithm>
#include <cmath>
#include <random>

#include "radsearch/errors.hpp"
#include "radsearch/synthdata/synthdata.hpp"

namespace radsearch {

int stage_from_rbl(double rbl_percent) {
  if (!std::isfinite(rbl_percent) || rbl_percent < 0.0 || rbl_percent > 100.0) {
    throw RangeError("bone loss " + std::to_string(rbl_percent) + "% outside [0, 100]");
  }
  if (rbl_percent < 15.0) return 1;
  if (rbl_percent <= 33.0) return 2;
  return 3;
}

namespace {

using G = RenderGeometry;

constexpr double kBackground = 0.15;
constexpr double kSoftTissue = 0.22;
constexpr double kBone = 0.55;
constexpr double kBoneTexture = 0.04;
constexpr double kCrown = 0.92;
constexpr double kRoot = 0.78;
constexpr double kFiducial = 1.0;
constexpr double kNoiseSigma = 0.02;
constexpr std::size_t kTeeth = 3;
constexpr double kToothCenters[kTeeth] = {62.0, 112.0, 162.0};
constexpr std::size_t kCell = 6;
constexpr std::size_t kCellPitch = 10;

struct Tooth {
  double center;
  double half_width;
};

// Half-width of the tooth silhouette at row y, 0 outside the tooth.
double tooth_half_width(const Tooth& t, double y) {
  if (y < G::kCrownTop || y >= G::kApexRow) return 0.0;
  if (y < G::kCrownTop + 6) return t.half_width * (0.75 + 0.25 * (y - G::kCrownTop) / 6.0);
  if (y < G::kCejRow) return t.half_width;
  const double along = (y - G::kCejRow) / static_cast<double>(G::kRootLength);
  return t.half_width * (0.85 - 0.5 * along);
}

bool fiducial_lit(Region region, std::size_t y, std::size_t x) {
  if (y < G::kFiducialOrigin || x < G::kFiducialOrigin) return false;
  const std::size_t ly = y - G::kFiducialOrigin;
  const std::size_t lx = x - G::kFiducialOrigin;
  if (ly >= G::kFiducialExtent || lx >= G::kFiducialExtent) return false;
  const std::size_t row = ly / kCellPitch;
  const std::size_t col = lx / kCellPitch;
  if (row >= 2 || col >= 3 || ly % kCellPitch >= kCell || lx % kCellPitch >= kCell) return false;
  const std::size_t cell = row * 3 + col;
  return cell <= static_cast<std::size_t>(region);
}

}  // namespace

ImageTensor render_image(const PatientRecord& record, std::uint64_t seed) {
  if (record.rbl_percent < 0.0 || record.rbl_percent > 100.0) {
    throw RangeError("bone loss " + std::to_string(record.rbl_percent) + "% outside [0, 100]");
  }
  // Draw order is fixed and independent of the record, so two records that
  // differ in one attribute share every random nuisance.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tooth teeth[kTeeth];
  for (std::size_t i = 0; i < kTeeth; ++i) {
    teeth[i].center = kToothCenters[i] + (unit(rng) * 12.0 - 6.0);
    teeth[i].half_width = 15.0 + unit(rng) * 3.0;
  }
  const double gain = 0.85 + unit(rng) * 0.30;
  const double offset = unit(rng) * 0.10 - 0.05;
  const double texture_phase = unit(rng) * 6.283185307179586;

  const double crest = G::kCejRow + record.rbl_percent / 100.0 * G::kRootLength;
  std::normal_distribution<double> noise(0.0, kNoiseSigma);

  ImageTensor image(G::kSize, G::kSize);
  for (std::size_t y = 0; y < G::kSize; ++y) {
    const double fy = static_cast<double>(y) + 0.5;
    for (std::size_t x = 0; x < G::kSize; ++x) {
      const double fx = static_cast<double>(x) + 0.5;
      double v = kBackground;
      if (fy >= crest) {
        v = kBone + kBoneTexture * std::sin(0.45 * fx + texture_phase) * std::cos(0.31 * fy);
      } else if (fy >= G::kCejRow) {
        v = kSoftTissue;
      }
      for (const Tooth& t : teeth) {
        const double hw = tooth_half_width(t, fy);
        if (hw > 0.0 && std::abs(fx - t.center) <= hw) v = fy < G::kCejRow ? kCrown : kRoot;
      }
      v = gain * v + offset + noise(rng);
      if (fiducial_lit(record.region, y, x)) v = kFiducial;
      const auto px = static_cast<float>(std::clamp(v, 0.0, 1.0));
      for (std::size_t c = 0; c < ImageTensor::kChannels; ++c) image.at(c, y, x) = px;
    }
  }
  return image;
}

}  // namespace radsearch
