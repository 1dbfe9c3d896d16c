#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "radsearch/loss/contrastive.hpp"
#include "support.hpp"

namespace radsearch {
namespace {

using testing::random_matrix;
using testing::random_similarity;
using M = Matrix<double>;
using V = ad::Var<double>;

double scalar_cosine(const M& a, std::size_t i, const M& b, std::size_t j) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t p = 0; p < a.cols(); ++p) {
    dot += a(i, p) * b(j, p);
    na += a(i, p) * a(i, p);
    nb += b(j, p) * b(j, p);
  }
  return dot / std::sqrt(na * nb);
}

// Explicit sum of -t * log softmax, row by row.
double ce_oracle(const M& logits, const M& targets) {
  double total = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    long double denom = 0;
    for (std::size_t j = 0; j < logits.cols(); ++j) denom += std::exp(static_cast<long double>(logits(i, j)));
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      const long double p = std::exp(static_cast<long double>(logits(i, j))) / denom;
      total -= static_cast<double>(targets(i, j) * std::log(p));
    }
  }
  return total / static_cast<double>(logits.rows());
}

// ---------------------------------------------------------------- similarity

TEST(Similarity, IdenticalModalitiesGiveEqualMatrices) {
  std::mt19937_64 rng(1);
  const auto e = random_matrix(5, 4, rng);
  const auto s = similarity_matrices(e, e);
  EXPECT_EQ(s.ets, s.ts);
  EXPECT_EQ(s.ts, s.is);
}

TEST(Similarity, SinglePairIsOne) {
  std::mt19937_64 rng(2);
  const auto s = similarity_matrices(random_matrix(1, 3, rng), random_matrix(1, 3, rng));
  EXPECT_NEAR(s.ts(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s.is(0, 0), 1.0, 1e-12);
  EXPECT_EQ(s.ets.rows(), 1u);
}

TEST(Similarity, MatchesPerPairCosineOracle) {
  std::mt19937_64 rng(3);
  const auto et = random_matrix(4, 6, rng);
  const auto ei = random_matrix(4, 6, rng);
  const auto s = similarity_matrices(et, ei);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(s.ets(i, j), scalar_cosine(et, i, ei, j), 1e-6);
      EXPECT_NEAR(s.ts(i, j), scalar_cosine(et, i, et, j), 1e-6);
      EXPECT_NEAR(s.is(i, j), scalar_cosine(ei, i, ei, j), 1e-6);
      EXPECT_NEAR(s.ts(i, j), s.ts(j, i), 1e-12);
    }
}

TEST(Similarity, MisalignedOrDegenerateBatchesAreRejected) {
  EXPECT_THROW(similarity_matrices(M(3, 2, 1.0), M(2, 2, 1.0)), DimensionError);
  EXPECT_THROW(similarity_matrices(M(2, 2, 1.0), M(2, 3, 1.0)), DimensionError);
  auto zero_row = M(2, 2, 1.0);
  zero_row(1, 0) = zero_row(1, 1) = 0;
  EXPECT_THROW(similarity_matrices(M(2, 2, 1.0), zero_row), DegenerateInputError);
}

// ---------------------------------------------------------------- soft targets

TEST(SoftTargets, DiagonalStaysRowMaximum) {
  M s(4, 4, 0.2);
  for (std::size_t i = 0; i < 4; ++i) s(i, i) = 1.0;
  const auto t = soft_targets(s, s, 1.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) EXPECT_GT(t(i, i), t(i, j));
}

TEST(SoftTargets, SingleClass) {
  const auto t = soft_targets(M(1, 1, 1.0), M(1, 1, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(t(0, 0), 1.0);
}

TEST(SoftTargets, MatchesDirectFormulaAndIsRowStochastic) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> n(1, 10);
  std::uniform_real_distribution<double> tau(0.01, 3.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t b = n(rng);
    const auto ts = random_similarity(b, rng);
    const auto is = random_similarity(b, rng);
    const double temperature = trial % 3 == 0 ? 1.0 : tau(rng);
    const auto t = soft_targets(ts, is, temperature);
    for (std::size_t i = 0; i < b; ++i) {
      long double denom = 0;
      for (std::size_t j = 0; j < b; ++j) denom += std::exp((ts(i, j) + is(i, j)) / 2.0L / temperature);
      double sum = 0;
      for (std::size_t j = 0; j < b; ++j) {
        const long double expect = std::exp((ts(i, j) + is(i, j)) / 2.0L / temperature) / denom;
        EXPECT_NEAR(t(i, j), static_cast<double>(expect), 1e-12);
        sum += t(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(SoftTargets, RejectsBadArguments) {
  EXPECT_THROW(soft_targets(M(2, 2, 1.0), M(2, 2, 1.0), 0.0), ConfigError);
  EXPECT_THROW(soft_targets(M(2, 2, 1.0), M(2, 2, 1.0), -1.0), ConfigError);
  EXPECT_THROW(soft_targets(M(2, 2, 1.0), M(3, 3, 1.0), 1.0), ContractError);
  EXPECT_THROW(soft_targets(M(2, 3, 1.0), M(2, 3, 1.0), 1.0), ContractError);
}

// ---------------------------------------------------------------- contrastive loss

TEST(ContrastiveLoss, PerfectAlignmentWithLargeMarginApproachesZero) {
  for (double margin : {20.0, 40.0}) {
    M ets(4, 4, 0.0);
    M targets(4, 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
      ets(i, i) = margin;
      targets(i, i) = 1.0;
    }
    const auto l = contrastive_loss(ets, targets);
    EXPECT_LE(l.total, 1e-3);
    EXPECT_GE(l.total, 0.0);
  }
}

TEST(ContrastiveLoss, SymmetricInputsGiveEqualHalves) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 2 + trial % 7;
    const auto ets = random_similarity(b, rng);
    const auto targets = soft_targets(random_similarity(b, rng), random_similarity(b, rng), 1.0);
    // softmax of a symmetric matrix is not symmetric, so symmetrize.
    M sym(b, b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) sym(i, j) = (targets(i, j) + targets(j, i)) / 2.0;
    const auto l = contrastive_loss(ets, sym);
    EXPECT_NEAR(l.text_loss, l.image_loss, 1e-9);
    EXPECT_NEAR(l.total, (l.text_loss + l.image_loss) / 2.0, 1e-9);
  }
}

TEST(ContrastiveLoss, MatchesScalarLoopOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ets = random_matrix(4, 4, rng);
    const auto targets = soft_targets(random_similarity(4, rng), random_similarity(4, rng), 1.0);
    const auto l = contrastive_loss(ets, targets);
    EXPECT_NEAR(l.text_loss, ce_oracle(ets, targets), 1e-7);
    EXPECT_NEAR(l.image_loss, ce_oracle(ets.transposed(), targets.transposed()), 1e-7);
    EXPECT_NEAR(l.total, (l.text_loss + l.image_loss) / 2.0, 1e-12);
    EXPECT_GE(l.total, 0.0);
  }
}

TEST(ContrastiveLoss, ShapeMismatchIsContractError) {
  EXPECT_THROW(contrastive_loss(M(3, 3), M(2, 2)), ContractError);
  EXPECT_THROW(contrastive_loss(M(2, 3), M(2, 3)), ContractError);
}

TEST(ContrastiveLoss, TruePairingBeatsShuffledPairings) {
  // Separable construction: each pair shares a dominant one-hot direction.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 3 + trial % 5;
    M et(b, b + 2), ei(b, b + 2);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b + 2; ++j) {
        et(i, j) = (i == j ? 1.0 : 0.0) + noise(rng);
        ei(i, j) = (i == j ? 1.0 : 0.0) + noise(rng);
      }
    const auto loss_of = [](const M& t, const M& i) {
      return breakdown(batch_loss(V::constant(t), V::constant(i), 1.0)).total;
    };
    const double truth = loss_of(et, ei);
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    for (int s = 0; s < 10; ++s) {
      std::shuffle(perm.begin(), perm.end(), rng);
      if (std::is_sorted(perm.begin(), perm.end())) continue;
      M shuffled(b, b + 2);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b + 2; ++j) shuffled(i, j) = ei(perm[i], j);
      EXPECT_LE(truth, loss_of(et, shuffled));
    }
  }
}

// ---------------------------------------------------------------- gradients

TEST(LossGradient, MatchesFiniteDifferencesIn32Bit) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto et64 = random_matrix(4, 8, rng);
    const auto ei64 = random_matrix(4, 8, rng);
    auto et = ad::Var<float>::parameter(Matrix<float>::cast(et64));
    auto ei = ad::Var<float>::parameter(Matrix<float>::cast(ei64));
    ad::backward(batch_loss(et, ei, 1.0).total);
    // Numeric side on a 64-bit copy of the same float values.
    const M et_ref = M::cast(et.value());
    const M ei_ref = M::cast(ei.value());
    auto loss = [](const M& a, const M& b) { return breakdown(batch_loss(V::constant(a), V::constant(b), 1.0)).total; };
    const double h = 1e-4;
    for (int which = 0; which < 2; ++which) {
      const auto grad = (which == 0 ? et : ei).grad();
      for (std::size_t i = 0; i < grad.size(); ++i) {
        M a = et_ref, b = ei_ref;
        M& target = which == 0 ? a : b;
        const double base = target.data()[i];
        target.data()[i] = base + h;
        const double up = loss(a, b);
        target.data()[i] = base - h;
        const double down = loss(a, b);
        const double numeric = (up - down) / (2 * h);
        const double an = grad.data()[i];
        EXPECT_LE(std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), 1e-3}), 1e-4);
      }
    }
  }
}

TEST(LossGradient, SmallStepDoesNotIncreaseLoss) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto et = V::parameter(random_matrix(6, 8, rng));
    auto ei = V::parameter(random_matrix(6, 8, rng));
    const auto before = batch_loss(et, ei, 1.0).total;
    ad::backward(before);
    for (V* v : {&et, &ei}) {
      const auto g = v->grad();
      auto w = v->mutable_value().data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 1e-4 * g.data()[i];
    }
    const double after = batch_loss(V::constant(et.value()), V::constant(ei.value()), 1.0).total.value()(0, 0);
    EXPECT_LE(after, before.value()(0, 0)) << "seed " << seed;
  }
}

TEST(LossTemperature, ScalesLogitsAndTargets) {
  std::mt19937_64 rng(9);
  const auto et = random_matrix(5, 4, rng);
  const auto ei = random_matrix(5, 4, rng);
  const double tau = 0.25;
  const auto s = similarity_matrices(et, ei);
  M scaled = s.ets;
  for (auto& v : scaled.data()) v /= tau;
  const auto expect = contrastive_loss(scaled, soft_targets(s.ts, s.is, tau));
  const auto got = breakdown(batch_loss(V::constant(et), V::constant(ei), tau));
  EXPECT_NEAR(got.total, expect.total, 1e-12);
  EXPECT_NEAR(got.text_loss, expect.text_loss, 1e-12);
}

}  // namespace
}  // namespace radsearch
