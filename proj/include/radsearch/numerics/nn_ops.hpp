#pragma once

// Layer-shaped differentiable ops. Feature maps travel as (batch x C*H*W)
// matrices in channel-planar order; each op carries its own geometry.

#include <cstdint>
#include <vector>

#include "radsearch/numerics/autodiff.hpp"

namespace radsearch::ad {

struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 3;

  std::size_t in_size() const { return in_channels * height * width; }
  std::size_t out_size() const { return out_channels * height * width; }
  std::size_t weight_cols() const { return in_channels * kernel * kernel; }
};

namespace detail {

struct Span1 {
  std::size_t lo, hi;
};

// Valid output range along one axis for a kernel offset `d` (input = out + d).
inline Span1 valid_range(std::ptrdiff_t d, std::size_t extent) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(extent);
  const std::ptrdiff_t lo = d < 0 ? -d : 0;
  const std::ptrdiff_t hi = d > 0 ? n - d : n;
  return {static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0)),
          static_cast<std::size_t>(std::max<std::ptrdiff_t>(hi, 0))};
}

}  // namespace detail

// Same-padded, stride-1 convolution. weights: out_channels x (in_channels*k*k),
// bias: 1 x out_channels.
template <typename Real>
Var<Real> conv2d(const Var<Real>& x, const Var<Real>& weights, const Var<Real>& bias,
                 const ConvGeometry& geo) {
  if (x.cols() != geo.in_size()) {
    throw DimensionError("conv2d input has " + std::to_string(x.cols()) + " columns, geometry needs " +
                         std::to_string(geo.in_size()));
  }
  if (weights.rows() != geo.out_channels || weights.cols() != geo.weight_cols()) {
    throw DimensionError("conv2d weight shape " + weights.value().shape_string() + " does not match geometry");
  }
  if (bias.rows() != 1 || bias.cols() != geo.out_channels) {
    throw DimensionError("conv2d bias shape " + bias.value().shape_string() + " does not match geometry");
  }
  const std::size_t H = geo.height, W = geo.width, HW = H * W, K = geo.kernel;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
  const std::size_t batch = x.rows();

  Matrix<Real> out(batch, geo.out_size());
  std::vector<double> acc(HW);
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* in = x.value().row(b).data();
    Real* o = out.row(b).data();
    for (std::size_t co = 0; co < geo.out_channels; ++co) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(bias.value()(0, co)));
      const Real* wrow = weights.value().row(co).data();
      for (std::size_t ci = 0; ci < geo.in_channels; ++ci) {
        const Real* plane = in + ci * HW;
        for (std::size_t ky = 0; ky < K; ++ky) {
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const auto ys = detail::valid_range(dy, H);
          for (std::size_t kx = 0; kx < K; ++kx) {
            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
            const auto xs = detail::valid_range(dx, W);
            const double w = wrow[(ci * K + ky) * K + kx];
            for (std::size_t y = ys.lo; y < ys.hi; ++y) {
              double* arow = acc.data() + y * W;
              const Real* irow = plane + static_cast<std::ptrdiff_t>(y * W) + dy * static_cast<std::ptrdiff_t>(W) + dx;
              for (std::size_t xx = xs.lo; xx < xs.hi; ++xx) arow[xx] += w * irow[xx];
            }
          }
        }
      }
      Real* oplane = o + co * HW;
      for (std::size_t i = 0; i < HW; ++i) oplane[i] = static_cast<Real>(acc[i]);
    }
  }

  return make_op(std::move(out), {x, weights, bias}, [geo](Node<Real>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    const std::size_t H = geo.height, W = geo.width, HW = H * W, K = geo.kernel;
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
    const std::size_t batch = self.value.rows();

    std::vector<double> gw(pw.requires_grad ? pw.value.size() : 0, 0.0);
    std::vector<double> gb(pb.requires_grad ? geo.out_channels : 0, 0.0);
    std::vector<double> gin(px.requires_grad ? geo.in_size() : 0);

    for (std::size_t b = 0; b < batch; ++b) {
      const Real* in = px.value.row(b).data();
      const Real* g = self.grad.row(b).data();
      if (px.requires_grad) std::fill(gin.begin(), gin.end(), 0.0);
      for (std::size_t co = 0; co < geo.out_channels; ++co) {
        const Real* gplane = g + co * HW;
        if (pb.requires_grad) {
          double s = 0.0;
          for (std::size_t i = 0; i < HW; ++i) s += gplane[i];
          gb[co] += s;
        }
        const Real* wrow = pw.value.row(co).data();
        for (std::size_t ci = 0; ci < geo.in_channels; ++ci) {
          const Real* plane = in + ci * HW;
          for (std::size_t ky = 0; ky < K; ++ky) {
            const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
            const auto ys = detail::valid_range(dy, H);
            for (std::size_t kx = 0; kx < K; ++kx) {
              const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
              const auto xs = detail::valid_range(dx, W);
              const std::size_t widx = (ci * K + ky) * K + kx;
              if (pw.requires_grad) {
                double s = 0.0;
                for (std::size_t y = ys.lo; y < ys.hi; ++y) {
                  const Real* grow = gplane + y * W;
                  const Real* irow = plane + static_cast<std::ptrdiff_t>(y * W) + dy * static_cast<std::ptrdiff_t>(W) + dx;
                  for (std::size_t xx = xs.lo; xx < xs.hi; ++xx) s += static_cast<double>(grow[xx]) * irow[xx];
                }
                gw[co * geo.weight_cols() + widx] += s;
              }
              if (px.requires_grad) {
                const double w = wrow[widx];
                double* gplane_in = gin.data() + ci * HW;
                for (std::size_t y = ys.lo; y < ys.hi; ++y) {
                  const Real* grow = gplane + y * W;
                  double* drow = gplane_in + static_cast<std::ptrdiff_t>(y * W) + dy * static_cast<std::ptrdiff_t>(W) + dx;
                  for (std::size_t xx = xs.lo; xx < xs.hi; ++xx) drow[xx] += w * grow[xx];
                }
              }
            }
          }
        }
      }
      if (px.requires_grad) {
        Real* dst = px.grad_buffer().row(b).data();
        for (std::size_t i = 0; i < gin.size(); ++i) dst[i] += static_cast<Real>(gin[i]);
      }
    }
    if (pw.requires_grad) {
      auto& dst = pw.grad_buffer();
      for (std::size_t i = 0; i < gw.size(); ++i) dst.data()[i] += static_cast<Real>(gw[i]);
    }
    if (pb.requires_grad) {
      auto& dst = pb.grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) dst(0, i) += static_cast<Real>(gb[i]);
    }
  });
}

// Non-overlapping average pooling by `factor` along both spatial axes.
template <typename Real>
Var<Real> avg_pool2d(const Var<Real>& x, std::size_t channels, std::size_t height, std::size_t width,
                     std::size_t factor) {
  if (factor == 0 || height % factor != 0 || width % factor != 0) {
    throw DimensionError("avg_pool2d factor " + std::to_string(factor) + " does not divide " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  if (x.cols() != channels * height * width) {
    throw DimensionError("avg_pool2d input width " + std::to_string(x.cols()) + " does not match geometry");
  }
  if (factor == 1) return x;
  const std::size_t oh = height / factor, ow = width / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  Matrix<Real> out(x.rows(), channels * oh * ow);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const Real* in = x.value().row(b).data();
    Real* o = out.row(b).data();
    for (std::size_t c = 0; c < channels; ++c) {
      const Real* plane = in + c * height * width;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double s = 0.0;
          for (std::size_t dy = 0; dy < factor; ++dy) {
            const Real* r = plane + (y * factor + dy) * width + xx * factor;
            for (std::size_t dx = 0; dx < factor; ++dx) s += r[dx];
          }
          o[(c * oh + y) * ow + xx] = static_cast<Real>(s * inv);
        }
      }
    }
  }
  return make_op(std::move(out), {x}, [channels, height, width, factor, oh, ow, inv](Node<Real>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < g.rows(); ++b) {
      Real* dst = g.row(b).data();
      const Real* up = self.grad.row(b).data();
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t xx = 0; xx < ow; ++xx) {
            const Real v = static_cast<Real>(up[(c * oh + y) * ow + xx] * inv);
            for (std::size_t dy = 0; dy < factor; ++dy) {
              Real* r = dst + c * height * width + (y * factor + dy) * width + xx * factor;
              for (std::size_t dx = 0; dx < factor; ++dx) r[dx] += v;
            }
          }
        }
      }
    }
  });
}

// (batch x C*H*W) -> (batch x C), mean over each plane.
template <typename Real>
Var<Real> global_avg_pool(const Var<Real>& x, std::size_t channels, std::size_t plane_size) {
  if (x.cols() != channels * plane_size) {
    throw DimensionError("global_avg_pool input width " + std::to_string(x.cols()) + " does not match geometry");
  }
  const double inv = 1.0 / static_cast<double>(plane_size);
  Matrix<Real> out(x.rows(), channels);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const Real* in = x.value().row(b).data();
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane_size; ++i) s += in[c * plane_size + i];
      out(b, c) = static_cast<Real>(s * inv);
    }
  }
  return make_op(std::move(out), {x}, [channels, plane_size, inv](Node<Real>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < g.rows(); ++b) {
      Real* dst = g.row(b).data();
      for (std::size_t c = 0; c < channels; ++c) {
        const Real v = static_cast<Real>(self.grad(b, c) * inv);
        for (std::size_t i = 0; i < plane_size; ++i) dst[c * plane_size + i] += v;
      }
    }
  });
}

// Mean of embedding rows over the non-padding ids of each sequence; an
// all-padding sequence pools to the zero vector.
template <typename Real>
Var<Real> embedding_bag_mean(const Var<Real>& table, const std::vector<std::vector<std::uint32_t>>& tokens,
                             std::uint32_t pad_id = 0) {
  const std::size_t dim = table.cols();
  Matrix<Real> out(tokens.size(), dim);
  std::vector<double> acc(dim);
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    std::size_t count = 0;
    for (std::uint32_t id : tokens[b]) {
      if (id == pad_id) continue;
      if (id >= table.rows()) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(table.rows()));
      }
      const Real* r = table.value().row(id).data();
      for (std::size_t j = 0; j < dim; ++j) acc[j] += r[j];
      ++count;
    }
    if (count == 0) continue;
    for (std::size_t j = 0; j < dim; ++j) out(b, j) = static_cast<Real>(acc[j] / static_cast<double>(count));
  }
  return make_op(std::move(out), {table}, [tokens, pad_id](Node<Real>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < tokens.size(); ++b) {
      std::size_t count = 0;
      for (std::uint32_t id : tokens[b]) count += id != pad_id;
      if (count == 0) continue;
      const double inv = 1.0 / static_cast<double>(count);
      const Real* up = self.grad.row(b).data();
      for (std::uint32_t id : tokens[b]) {
        if (id == pad_id) continue;
        Real* dst = g.row(id).data();
        for (std::size_t j = 0; j < g.cols(); ++j) dst[j] += static_cast<Real>(up[j] * inv);
      }
    }
  });
}

}  // namespace radsearch::ad
