#pragma once

// Contrastive objective over a batch of aligned text/image embeddings.
//
//   ETS = cos(ET, EI), TS = cos(ET, ET), IS = cos(EI, EI)
//   targets = softmax_rows(((TS + IS) / 2) / temperature)
//   text  = CE(targets, softmax_rows(ETS))      image = CE(targets^T, softmax_rows(ETS^T))
//   total = (text + image) / 2
//
// CE is the mean over rows of -sum_j t_ij log p_ij (categorical cross-entropy).

#include "radsearch/numerics/autodiff.hpp"

namespace radsearch {

template <typename Real>
struct SimilarityVars {
  ad::Var<Real> ets;
  ad::Var<Real> ts;
  ad::Var<Real> is;
};

template <typename Real>
struct LossVars {
  ad::Var<Real> text_loss;
  ad::Var<Real> image_loss;
  ad::Var<Real> total;
};

struct LossBreakdown {
  double text_loss = 0.0;
  double image_loss = 0.0;
  double total = 0.0;
};

template <typename Real>
void check_batch(const ad::Var<Real>& et, const ad::Var<Real>& ei) {
  if (et.rows() != ei.rows() || et.cols() != ei.cols()) {
    throw DimensionError("text embeddings " + et.value().shape_string() + " and image embeddings " +
                         ei.value().shape_string() + " are not aligned");
  }
}

template <typename Real>
SimilarityVars<Real> similarity_matrices(const ad::Var<Real>& et, const ad::Var<Real>& ei) {
  check_batch(et, ei);
  return {ad::cosine_rows(et, ei), ad::cosine_rows(et, et), ad::cosine_rows(ei, ei)};
}

template <typename Real>
ad::Var<Real> soft_targets(const ad::Var<Real>& ts, const ad::Var<Real>& is, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive, got " + std::to_string(temperature));
  if (!ts.value().same_shape(is.value()) || ts.rows() != ts.cols()) {
    throw ContractError("soft targets need equal square similarity matrices, got " + ts.value().shape_string() +
                        " and " + is.value().shape_string());
  }
  return ad::softmax_rows(ad::scale(ad::add(ts, is), 0.5 / temperature));
}

template <typename Real>
LossVars<Real> contrastive_loss(const ad::Var<Real>& ets, const ad::Var<Real>& targets) {
  if (!ets.value().same_shape(targets.value()) || ets.rows() != ets.cols()) {
    throw ContractError("contrastive loss needs equal square matrices, got " + ets.value().shape_string() +
                        " and " + targets.value().shape_string());
  }
  auto text = ad::soft_cross_entropy(ets, targets);
  auto image = ad::soft_cross_entropy(ad::transpose(ets), ad::transpose(targets));
  auto total = ad::scale(ad::add(text, image), 0.5);
  return {text, image, total};
}

// Whole objective from embeddings. `temperature` divides both the target
// similarities and the cross-modal logits.
template <typename Real>
LossVars<Real> batch_loss(const ad::Var<Real>& et, const ad::Var<Real>& ei, double temperature) {
  auto sims = similarity_matrices(et, ei);
  auto targets = soft_targets(sims.ts, sims.is, temperature);
  auto logits = temperature == 1.0 ? sims.ets : ad::scale(sims.ets, 1.0 / temperature);
  return contrastive_loss(logits, targets);
}

template <typename Real>
LossBreakdown breakdown(const LossVars<Real>& v) {
  const double text = v.text_loss.value()(0, 0);
  const double image = v.image_loss.value()(0, 0);
  return {text, image, (text + image) / 2.0};
}

template <typename Real>
struct SimilarityMatrices {
  Matrix<Real> ets;
  Matrix<Real> ts;
  Matrix<Real> is;
};

// Value-level entry points.
template <typename Real>
SimilarityMatrices<Real> similarity_matrices(const Matrix<Real>& et, const Matrix<Real>& ei) {
  auto v = similarity_matrices(ad::Var<Real>::constant(et), ad::Var<Real>::constant(ei));
  return {v.ets.value(), v.ts.value(), v.is.value()};
}

template <typename Real>
LossBreakdown contrastive_loss(const Matrix<Real>& ets, const Matrix<Real>& targets) {
  return breakdown(contrastive_loss(ad::Var<Real>::constant(ets), ad::Var<Real>::constant(targets)));
}

template <typename Real>
Matrix<Real> soft_targets(const Matrix<Real>& ts, const Matrix<Real>& is, double temperature) {
  return soft_targets(ad::Var<Real>::constant(ts), ad::Var<Real>::constant(is), temperature).value();
}

}  // namespace radsearch
