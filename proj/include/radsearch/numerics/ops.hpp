#pragma once

// Pure-value kernels. All reductions accumulate in double.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "radsearch/numerics/matrix.hpp"

namespace radsearch {

namespace detail {

inline std::string shapes(const std::string& a, const std::string& b) {
  return "(" + a + " vs " + b + ")";
}

}  // namespace detail

template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch " +
                         detail::shapes(a.shape_string(), b.shape_string()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix<Real> out(n, m);
  std::vector<double> acc(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const Real* brow = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < m; ++j) out(i, j) = static_cast<Real>(acc[j]);
  }
  return out;
}

// a * b^T
template <typename Real>
Matrix<Real> matmul_nt(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt shape mismatch " +
                         detail::shapes(a.shape_string(), b.shape_string()));
  }
  Matrix<Real> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Real* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const Real* br = b.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += static_cast<double>(ar[p]) * br[p];
      out(i, j) = static_cast<Real>(s);
    }
  }
  return out;
}

// a^T * b
template <typename Real>
Matrix<Real> matmul_tn(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn shape mismatch " +
                         detail::shapes(a.shape_string(), b.shape_string()));
  }
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  std::vector<double> acc(n * m, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const Real* ar = a.row(p).data();
    const Real* br = b.row(p).data();
    for (std::size_t i = 0; i < n; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* dst = acc.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) dst[j] += av * static_cast<double>(br[j]);
    }
  }
  Matrix<Real> out(n, m);
  for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<Real>(acc[i]);
  return out;
}

template <typename Real>
Matrix<Real> softmax_rows(const Matrix<Real>& m) {
  Matrix<Real> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double denom = 0.0;
    for (Real v : in) denom += std::exp(static_cast<double>(v) - mx);
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j)
      o[j] = static_cast<Real>(std::exp(static_cast<double>(in[j]) - mx) / denom);
  }
  return out;
}

template <typename Real>
Matrix<Real> log_softmax_rows(const Matrix<Real>& m) {
  Matrix<Real> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double denom = 0.0;
    for (Real v : in) denom += std::exp(static_cast<double>(v) - mx);
    const double log_denom = std::log(denom) + mx;
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = static_cast<Real>(in[j] - log_denom);
  }
  return out;
}

template <typename Real>
std::vector<double> row_norms(const Matrix<Real>& m) {
  std::vector<double> norms(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (Real v : m.row(i)) s += static_cast<double>(v) * v;
    norms[i] = std::sqrt(s);
  }
  return norms;
}

template <typename Real>
void require_nonzero_rows(const std::vector<double>& norms, const char* which) {
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (!(norms[i] > 0.0) || !std::isfinite(norms[i])) {
      throw DegenerateInputError(std::string("zero-norm row ") + std::to_string(i) +
                                 " in " + which);
    }
  }
}

// output(i, j) = a_i . b_j / (|a_i| |b_j|)
template <typename Real>
Matrix<Real> cosine_rows(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("cosine_rows column mismatch " +
                         detail::shapes(a.shape_string(), b.shape_string()));
  }
  const auto na = row_norms(a);
  const auto nb = row_norms(b);
  require_nonzero_rows<Real>(na, "left operand");
  require_nonzero_rows<Real>(nb, "right operand");
  Matrix<Real> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Real* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const Real* br = b.row(j).data();
      double dot = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) dot += static_cast<double>(ar[p]) * br[p];
      out(i, j) = static_cast<Real>(dot / (na[i] * nb[j]));
    }
  }
  return out;
}

}  // namespace radsearch
