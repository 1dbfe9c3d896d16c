#pragma once

// Brute-force reference implementations. They share no code with the
// library and favour directness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "radsearch/retrieval/retrieval.hpp"

namespace radsearch::oracle {

using Flags = std::vector<std::vector<bool>>;

inline double hit(const Flags& j, std::size_t k) {
  double hits = 0;
  for (const auto& q : j) {
    bool any = false;
    for (std::size_t r = 0; r < k; ++r) any = any || q[r];
    hits += any ? 1 : 0;
  }
  return hits / static_cast<double>(j.size());
}

inline double precision(const Flags& j, std::size_t k) {
  double sum = 0;
  for (const auto& q : j) {
    int tp = 0;
    for (std::size_t r = 0; r < k; ++r) tp += q[r] ? 1 : 0;
    sum += static_cast<double>(tp) / static_cast<double>(k);
  }
  return sum / static_cast<double>(j.size());
}

inline double mrr(const Flags& j) {
  double sum = 0;
  for (const auto& q : j)
    for (std::size_t r = 0; r < q.size(); ++r)
      if (q[r]) {
        sum += 1.0 / static_cast<double>(r + 1);
        break;
      }
  return sum / static_cast<double>(j.size());
}

// Labels must lie in [0, categories).
inline double kappa(const std::vector<int>& a, const std::vector<int>& b, int categories) {
  std::vector<std::vector<double>> confusion(categories, std::vector<double>(categories, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) confusion[a[i]][b[i]] += 1;
  const double n = static_cast<double>(a.size());
  double po = 0, pe = 0;
  for (int c = 0; c < categories; ++c) {
    po += confusion[c][c] / n;
    double row = 0, col = 0;
    for (int d = 0; d < categories; ++d) {
      row += confusion[c][d];
      col += confusion[d][c];
    }
    pe += (row / n) * (col / n);
  }
  if (po == 1.0) return 1.0;
  return (po - pe) / (1 - pe);
}

inline double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return dot / std::sqrt(na * nb);
}

// Every candidate scored and sorted: score descending, then id ascending.
inline std::vector<ScoredImage> full_scan(const std::vector<std::uint64_t>& ids, const std::vector<double>& scores) {
  std::vector<ScoredImage> all;
  for (std::size_t i = 0; i < ids.size(); ++i) all.push_back({ids[i], scores[i]});
  std::sort(all.begin(), all.end(), [](const ScoredImage& a, const ScoredImage& b) {
    return a.score != b.score ? a.score > b.score : a.image_id < b.image_id;
  });
  return all;
}

}  // namespace radsearch::oracle
