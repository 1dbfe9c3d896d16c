#include "radsearch/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace radsearch {

void ImageTensor::validate(std::size_t expected_height, std::size_t expected_width) const {
  if (height_ != expected_height || width_ != expected_width || data_.size() != kChannels * height_ * width_) {
    throw InputError("image is " + std::to_string(height_) + "x" + std::to_string(width_) + "x3, expected " +
                     std::to_string(expected_height) + "x" + std::to_string(expected_width) + "x3");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const float v = data_[i];
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw InputError("pixel value " + std::to_string(v) + " at flat index " + std::to_string(i) +
                       " outside [0,1]");
    }
  }
}

GrayImage8 quantize(const ImageTensor& image) {
  GrayImage8 out{image.height(), image.width(), std::vector<std::uint8_t>(image.plane_size())};
  const auto src = image.data();
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const float v = std::clamp(src[i], 0.0f, 1.0f);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

ImageTensor to_tensor(const GrayImage8& gray) {
  ImageTensor out(gray.height, gray.width);
  auto dst = out.data();
  const std::size_t plane = gray.height * gray.width;
  for (std::size_t i = 0; i < plane; ++i) {
    const float v = static_cast<float>(gray.pixels[i]) / 255.0f;
    dst[i] = v;
    dst[plane + i] = v;
    dst[2 * plane + i] = v;
  }
  return out;
}

}  // namespace radsearch
