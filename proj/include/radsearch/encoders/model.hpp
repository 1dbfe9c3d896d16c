#pragma once

// Dual encoder: a bag-of-words text encoder and a small convolutional image
// encoder, each followed by a projection head into a shared space of size d.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "radsearch/encoders/vocabulary.hpp"
#include "radsearch/errors.hpp"
#include "radsearch/image.hpp"
#include "radsearch/numerics/nn_ops.hpp"

namespace radsearch {

struct ModelConfig {
  std::size_t image_height = 224;
  std::size_t image_width = 224;
  // Parameter-free average pooling applied before the first conv block.
  std::size_t input_pool = 4;
  std::vector<std::size_t> conv_channels = {8, 16, 32};
  std::size_t text_embed_dim = 32;
  std::size_t text_hidden_dim = 64;
  std::size_t text_dim = 64;     // n
  std::size_t image_dim = 128;   // m
  std::size_t shared_dim = 32;   // d
  std::size_t seq_len = 40;

  // Throws ConfigError when the geometry does not work out.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Real>
struct NamedParam {
  std::string name;
  ad::Var<Real> var;
};

template <typename Real>
struct DenseLayer {
  ad::Var<Real> weight;  // in x out
  ad::Var<Real> bias;    // 1 x out
  ad::Activation activation = ad::Activation::kTanh;

  ad::Var<Real> forward(const ad::Var<Real>& x) const {
    if (x.cols() != weight.rows()) {
      throw DimensionError("dense layer expects " + std::to_string(weight.rows()) + " inputs, got " +
                           std::to_string(x.cols()));
    }
    return ad::activate(ad::add_row(ad::matmul(x, weight), bias), activation);
  }

  std::size_t in_size() const { return weight.rows(); }
  std::size_t out_size() const { return weight.cols(); }
};

namespace detail {

template <typename Real>
Matrix<Real> xavier_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                            std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix<Real> m(rows, cols);
  for (auto& v : m.data()) v = static_cast<Real>(dist(rng));
  return m;
}

template <typename Real>
DenseLayer<Real> make_dense(std::size_t in, std::size_t out, ad::Activation act, std::mt19937_64& rng) {
  return {ad::Var<Real>::parameter(xavier_uniform<Real>(in, out, in, out, rng)),
          ad::Var<Real>::parameter(Matrix<Real>(1, out)), act};
}

// Rewrites `layer` so that it sees each input column of `features`
// standardized over the rows.
template <typename Real>
void fold_standardization(const Matrix<Real>& features, DenseLayer<Real>& layer) {
  auto& w = layer.weight.mutable_value();
  auto& bias = layer.bias.mutable_value();
  const double n = static_cast<double>(features.rows());
  for (std::size_t c = 0; c < features.cols(); ++c) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t b = 0; b < features.rows(); ++b) {
      const double v = features(b, c);
      s += v;
      s2 += v * v;
    }
    const double mu = s / n;
    const double sd = std::sqrt(std::max(s2 / n - mu * mu, 1e-12));
    for (std::size_t j = 0; j < w.cols(); ++j) {
      w(c, j) = static_cast<Real>(w(c, j) / sd);
      bias(0, j) = static_cast<Real>(bias(0, j) - mu * w(c, j));
    }
  }
}

template <typename To, typename From>
ad::Var<To> cast_param(const ad::Var<From>& v) {
  return ad::Var<To>::parameter(Matrix<To>::cast(v.value()));
}

}  // namespace detail

template <typename Real>
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const ModelConfig& cfg, std::size_t vocab_size, std::mt19937_64& rng)
      : embedding_(ad::Var<Real>::parameter(detail::xavier_uniform<Real>(
            vocab_size, cfg.text_embed_dim, vocab_size, cfg.text_embed_dim, rng))),
        hidden_(detail::make_dense<Real>(cfg.text_embed_dim, cfg.text_hidden_dim, ad::Activation::kTanh, rng)),
        output_(detail::make_dense<Real>(cfg.text_hidden_dim, cfg.text_dim, ad::Activation::kTanh, rng)) {}

  // tokens: one padded id sequence per batch row. Output: batch x n.
  ad::Var<Real> forward(const std::vector<std::vector<std::uint32_t>>& tokens) const {
    return output_.forward(hidden_.forward(ad::embedding_bag_mean(embedding_, tokens, Vocabulary::kPad)));
  }

  std::size_t output_size() const { return output_.out_size(); }

  // Folds the pooled-embedding statistics of `tokens` into the hidden layer.
  void calibrate(const std::vector<std::vector<std::uint32_t>>& tokens) {
    if (tokens.size() < 2) throw ContractError("text calibration needs at least 2 texts");
    auto f = ad::embedding_bag_mean(embedding_, tokens, Vocabulary::kPad).value();
    detail::fold_standardization(f, hidden_);
  }

  std::size_t vocab_size() const { return embedding_.rows(); }

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    fn("text.embedding", embedding_);
    fn("text.hidden.weight", hidden_.weight);
    fn("text.hidden.bias", hidden_.bias);
    fn("text.output.weight", output_.weight);
    fn("text.output.bias", output_.bias);
  }

 private:
  ad::Var<Real> embedding_;
  DenseLayer<Real> hidden_;
  DenseLayer<Real> output_;
};

template <typename Real>
class ImageEncoder {
 public:
  struct ConvBlock {
    ad::Var<Real> weight;
    ad::Var<Real> bias;
    ad::ConvGeometry geometry;
  };

  ImageEncoder() = default;
  ImageEncoder(const ModelConfig& cfg, std::mt19937_64& rng)
      : height_(cfg.image_height), width_(cfg.image_width), input_pool_(cfg.input_pool) {
    std::size_t h = cfg.image_height / cfg.input_pool;
    std::size_t w = cfg.image_width / cfg.input_pool;
    std::size_t in_ch = ImageTensor::kChannels;
    for (std::size_t out_ch : cfg.conv_channels) {
      ad::ConvGeometry geo{in_ch, out_ch, h, w, 3};
      blocks_.push_back({ad::Var<Real>::parameter(detail::xavier_uniform<Real>(
                             out_ch, geo.weight_cols(), in_ch * 9, out_ch * 9, rng)),
                         ad::Var<Real>::parameter(Matrix<Real>(1, out_ch)), geo});
      in_ch = out_ch;
      h /= 2;
      w /= 2;
    }
    final_plane_ = h * w;
    head_ = detail::make_dense<Real>(in_ch, cfg.image_dim, ad::Activation::kTanh, rng);
  }

  // Validates every image (shape, range) before touching the network.
  ad::Var<Real> forward(std::span<const ImageTensor* const> images) const {
    return forward_matrix(batch_input(images));
  }

  ad::Var<Real> forward(const ImageTensor& image) const {
    const ImageTensor* one[] = {&image};
    return forward(std::span<const ImageTensor* const>(one, 1));
  }

  std::size_t output_size() const { return head_.out_size(); }

  // Rescales every conv block so its pre-activations have zero mean and unit
  // variance over `images`, then folds the pooled-feature statistics into
  // the dense head.
  void calibrate(std::span<const ImageTensor* const> images) {
    if (images.size() < 2) throw ContractError("image calibration needs at least 2 images");
    auto x = ad::avg_pool2d(batch_input(images), ImageTensor::kChannels, height_, width_, input_pool_);
    for (auto& block : blocks_) {
      const auto& g = block.geometry;
      const std::size_t plane = g.height * g.width;
      const auto pre = ad::conv2d(x, block.weight, block.bias, g).value();
      auto& w = block.weight.mutable_value();
      auto& bias = block.bias.mutable_value();
      for (std::size_t c = 0; c < g.out_channels; ++c) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t b = 0; b < pre.rows(); ++b) {
          for (std::size_t i = 0; i < plane; ++i) {
            const double v = pre(b, c * plane + i);
            s += v;
            s2 += v * v;
          }
        }
        const double n = static_cast<double>(pre.rows() * plane);
        const double mu = s / n;
        const double sd = std::sqrt(std::max(s2 / n - mu * mu, 1e-12));
        for (std::size_t k = 0; k < w.cols(); ++k) w(c, k) = static_cast<Real>(w(c, k) / sd);
        bias(0, c) = static_cast<Real>((bias(0, c) - mu) / sd);
      }
      x = ad::activate(ad::conv2d(x, block.weight, block.bias, g), ad::Activation::kSilu);
      x = ad::avg_pool2d(x, g.out_channels, g.height, g.width, 2);
    }
    detail::fold_standardization(ad::global_avg_pool(x, final_channels(), final_plane_).value(), head_);
  }

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      fn("image.conv" + std::to_string(i) + ".weight", blocks_[i].weight);
      fn("image.conv" + std::to_string(i) + ".bias", blocks_[i].bias);
    }
    fn("image.head.weight", head_.weight);
    fn("image.head.bias", head_.bias);
  }

 private:
  ad::Var<Real> batch_input(std::span<const ImageTensor* const> images) const {
    Matrix<Real> input(images.size(), ImageTensor::kChannels * height_ * width_);
    for (std::size_t b = 0; b < images.size(); ++b) {
      images[b]->validate(height_, width_);
      auto src = images[b]->data();
      auto dst = input.row(b);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<Real>(src[i]);
    }
    return ad::Var<Real>::constant(std::move(input));
  }

  std::size_t final_channels() const {
    return blocks_.empty() ? ImageTensor::kChannels : blocks_.back().geometry.out_channels;
  }

  ad::Var<Real> forward_matrix(ad::Var<Real> x) const {
    x = ad::avg_pool2d(x, ImageTensor::kChannels, height_, width_, input_pool_);
    for (const auto& block : blocks_) {
      const auto& g = block.geometry;
      x = ad::activate(ad::conv2d(x, block.weight, block.bias, g), ad::Activation::kSilu);
      x = ad::avg_pool2d(x, g.out_channels, g.height, g.width, 2);
    }
    return head_.forward(ad::global_avg_pool(x, final_channels(), final_plane_));
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t input_pool_ = 1;
  std::size_t final_plane_ = 0;
  std::vector<ConvBlock> blocks_;
  DenseLayer<Real> head_;
};

template <typename Real>
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(std::size_t in, std::size_t out, std::mt19937_64& rng,
                 ad::Activation act = ad::Activation::kTanh)
      : dense_(detail::make_dense<Real>(in, out, act, rng)) {}
  explicit ProjectionHead(DenseLayer<Real> dense) : dense_(std::move(dense)) {}

  ad::Var<Real> forward(const ad::Var<Real>& x) const { return dense_.forward(x); }
  std::size_t in_size() const { return dense_.in_size(); }
  std::size_t out_size() const { return dense_.out_size(); }

  template <typename Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", dense_.weight);
    fn(prefix + ".bias", dense_.bias);
  }

 private:
  DenseLayer<Real> dense_;
};

// The full model. Forward passes are pure functions of (inputs, parameters).
template <typename Real>
class DualEncoder {
 public:
  DualEncoder() = default;

  DualEncoder(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed) : config_(std::move(cfg)), vocab_(std::move(vocab)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    text_ = TextEncoder<Real>(config_, vocab_.size(), rng);
    image_ = ImageEncoder<Real>(config_, rng);
    text_proj_ = ProjectionHead<Real>(config_.text_dim, config_.shared_dim, rng);
    image_proj_ = ProjectionHead<Real>(config_.image_dim, config_.shared_dim, rng);
  }

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }

  std::vector<std::vector<std::uint32_t>> tokenize_batch(std::span<const std::string> texts) const {
    std::vector<std::vector<std::uint32_t>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(tokenize(t, vocab_, config_.seq_len));
    return out;
  }

  // batch x n
  ad::Var<Real> encode_text(const std::vector<std::vector<std::uint32_t>>& tokens) const {
    return text_.forward(tokens);
  }
  ad::Var<Real> encode_text(std::span<const std::string> texts) const { return encode_text(tokenize_batch(texts)); }

  // batch x m
  ad::Var<Real> encode_images(std::span<const ImageTensor* const> images) const { return image_.forward(images); }

  ad::Var<Real> project_text(const ad::Var<Real>& encoded) const { return text_proj_.forward(encoded); }
  ad::Var<Real> project_image(const ad::Var<Real>& encoded) const { return image_proj_.forward(encoded); }

  // batch x d
  ad::Var<Real> embed_text(std::span<const std::string> texts) const { return project_text(encode_text(texts)); }
  ad::Var<Real> embed_images(std::span<const ImageTensor* const> images) const {
    return project_image(encode_images(images));
  }

  // Stable parameter order; checkpoints and optimizers rely on it.
  std::vector<NamedParam<Real>> params() {
    std::vector<NamedParam<Real>> out;
    auto collect = [&out](const std::string& name, ad::Var<Real>& v) { out.push_back({name, v}); };
    text_.for_each_param(collect);
    image_.for_each_param(collect);
    text_proj_.for_each_param("text_projection", collect);
    image_proj_.for_each_param("image_projection", collect);
    return out;
  }

  std::vector<NamedParam<Real>> params() const { return const_cast<DualEncoder*>(this)->params(); }

  // Deep copy (fresh parameter nodes), optionally at another precision.
  template <typename Other = Real>
  DualEncoder<Other> clone() const {
    DualEncoder<Other> copy(config_, vocab_, 0);
    auto dst = copy.params();
    auto src = params();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].var.mutable_value() = Matrix<Other>::cast(src[i].var.value());
    return copy;
  }

  // Data-dependent init; see the encoder calibrate() methods.
  void calibrate_images(std::span<const ImageTensor* const> images) { image_.calibrate(images); }
  void calibrate_text(std::span<const std::string> texts) { text_.calibrate(tokenize_batch(texts)); }

  void zero_grads() {
    for (auto& p : params()) p.var.zero_grad();
  }

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  TextEncoder<Real> text_;
  ImageEncoder<Real> image_;
  ProjectionHead<Real> text_proj_;
  ProjectionHead<Real> image_proj_;
};

}  // namespace radsearch
