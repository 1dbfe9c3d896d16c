#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "radsearch/errors.hpp"

namespace radsearch {

// H x W x 3 image with values in [0, 1], stored channel-planar (all of
// channel 0, then 1, then 2) so it feeds the convolution stack directly.
class ImageTensor {
 public:
  static constexpr std::size_t kChannels = 3;

  ImageTensor() = default;
  ImageTensor(std::size_t height, std::size_t width, float fill = 0.0f)
      : height_(height), width_(width), data_(kChannels * height * width, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return height_ * width_; }

  float& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * height_ + y) * width_ + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  // Throws InputError on wrong shape, non-finite or out-of-range values.
  void validate(std::size_t expected_height, std::size_t expected_width) const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> data_;
};

// Single-plane 8-bit raster; what lives on disk (replicated into three
// identical channels when written).
struct GrayImage8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage8&, const GrayImage8&) = default;
};

GrayImage8 quantize(const ImageTensor& image);  // channel 0, rounded
ImageTensor to_tensor(const GrayImage8& gray);

}  // namespace radsearch
