#pragma once

// Helpers shared by the unit tests and the acceptance binary: seeded
// generators, tiny model configurations and scratch directories.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "radsearch/encoders/checkpoint.hpp"
#include "radsearch/numerics/matrix.hpp"
#include "radsearch/records.hpp"
#include "radsearch/synthdata/synthdata.hpp"

namespace radsearch::testing {

inline Matrix<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix<double> m(rows, cols);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

// Random symmetric matrix with unit diagonal and entries in [-1, 1], the
// shape of a cosine self-similarity matrix.
inline Matrix<double> random_similarity(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix<double> m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) m(i, j) = m(j, i) = dist(rng);
  }
  return m;
}

inline PatientRecord random_record(std::mt19937_64& rng, std::uint64_t patient_id = 0) {
  PatientRecord r;
  r.patient_id = patient_id;
  r.age = std::uniform_int_distribution<int>(18, 85)(rng);
  r.gender = kAllGenders[std::uniform_int_distribution<std::size_t>(0, 1)(rng)];
  r.ethnicity = kAllEthnicities[std::uniform_int_distribution<std::size_t>(0, 4)(rng)];
  r.rbl_percent = std::uniform_real_distribution<double>(0.0, 60.0)(rng);
  r.stage = stage_from_rbl(r.rbl_percent);
  r.region = kAllRegions[std::uniform_int_distribution<std::size_t>(0, 5)(rng)];
  return r;
}

// Model sized for 16x16 inputs.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.image_height = 16;
  c.image_width = 16;
  c.input_pool = 1;
  c.conv_channels = {3, 4};
  c.text_embed_dim = 6;
  c.text_hidden_dim = 8;
  c.text_dim = 8;
  c.image_dim = 8;
  c.shared_dim = 8;
  c.seq_len = 24;
  return c;
}

// Model that reads the 224x224 corpus rasters cheaply.
inline ModelConfig small_corpus_model_config() {
  ModelConfig c;
  c.input_pool = 28;
  c.conv_channels = {4};
  c.text_embed_dim = 8;
  c.text_hidden_dim = 8;
  c.text_dim = 8;
  c.image_dim = 8;
  c.shared_dim = 8;
  return c;
}

inline GrayImage8 random_gray(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  GrayImage8 g{h, w, std::vector<std::uint8_t>(h * w)};
  std::uniform_int_distribution<int> dist(0, 255);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(dist(rng));
  return g;
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("radsearch_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace radsearch::testing
