#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "msc/losses.hpp"
#include "msc/random.hpp"
#include "support/oracles.hpp"

using namespace msc;

namespace {

Matrix random_batch(Rng& rng, std::size_t n, std::size_t d, double offset = 1.5) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.normal() + (j == 0 ? offset : 0.0);
  return m;
}

Center random_center(Rng& rng, std::size_t d) {
  Matrix ref = random_batch(rng, 12, d);
  return compute_center(ref);
}

void expect_matrix_near(const Matrix& a, const std::vector<std::vector<double>>& b, double tol) {
  ASSERT_EQ(a.rows(), b.size());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) EXPECT_NEAR(a(i, j), b[i][j], tol) << i << "," << j;
}

double max_rel_error(const Matrix& analytic, const Matrix& numeric) {
  double diff = 0, scale = 0;
  for (std::size_t k = 0; k < analytic.data().size(); ++k) {
    diff = std::max(diff, std::abs(analytic.data()[k] - numeric.data()[k]));
    scale = std::max({scale, std::abs(analytic.data()[k]), std::abs(numeric.data()[k])});
  }
  return scale < 1e-10 ? diff : diff / scale;
}

const LossConfig kTau025{Objective::Msc, 0.25, 1.0};

}  // namespace

// ---------------------------------------------------------------- center

TEST(CenterLoss, MinimumAtCenter) {
  const Center c = Center::from_vector({0.3, -0.2, 0.5});
  const LossResult r = center_loss(c.values(), c);
  EXPECT_EQ(r.value, 0.0);
  for (double g : r.grads.data()) EXPECT_EQ(g, 0.0);
}

TEST(CenterLoss, UnitAxis) {
  const LossResult r = center_loss(Vector{1, 0}, Center::zero(2));
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.grads(0, 0), 2.0);
  EXPECT_EQ(r.grads(0, 1), 0.0);
}

TEST(CenterLoss, MatchesOracle) {
  const LossResult r = center_loss(Vector{0.3, -1.2, 0.5}, Center::from_vector({0.2, 0.1, -0.4}));
  EXPECT_NEAR(r.value, 2.51, 1e-12);
  expect_matrix_near(r.grads, {{0.2, -2.6, 1.8}}, 1e-12);
}

TEST(CenterLoss, DimensionMismatch) {
  EXPECT_THROW(center_loss(Vector{1, 0, 0}, Center::zero(2)), Error);
}

// ---------------------------------------------------------------- angular

TEST(AngularCenterLoss, ZeroCenterIsZero) {
  EXPECT_EQ(angular_center_loss(Vector{3, -1, 2}, Center::zero(3)).value, 0.0);
}

TEST(AngularCenterLoss, DiagonalExample) {
  EXPECT_NEAR(angular_center_loss(Vector{1, 1}, Center::from_vector({0.5, 0.5})).value, -0.7071067811865476, 1e-15);
}

TEST(AngularCenterLoss, MatchesOracle) {
  const LossResult r = angular_center_loss(Vector{1.0, -0.5, 2.0, 0.3}, Center::from_vector({0.3, 0.2, 0.1, -0.2}));
  EXPECT_NEAR(r.value, -0.14713238961869126, 1e-14);
  expect_matrix_near(r.grads, {{-0.10226981477130886, -0.10032490545711599, 0.011831531661340007, 0.094814329066902831}},
                     1e-12);
}

TEST(AngularCenterLoss, DegenerateInput) {
  try {
    angular_center_loss(Vector{0, 0}, Center::zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateVector);
  }
}

// ---------------------------------------------------------------- contrastive

TEST(ContrastiveLoss, SinglePairIsZero) {
  Rng rng(1);
  const LossResult r = contrastive_loss(random_batch(rng, 2, 5), kTau025);
  EXPECT_EQ(r.value, 0.0);
  for (double g : r.grads.data()) EXPECT_EQ(g, 0.0);
}

TEST(ContrastiveLoss, UniformSimilaritiesGiveLogOfNegatives) {
  // 2B = 4 mutually orthogonal vectors: every similarity is 0.
  Matrix batch(4, 4);
  for (std::size_t i = 0; i < 4; ++i) batch(i, i) = 1.0 + i;
  EXPECT_NEAR(contrastive_loss(batch, kTau025).value, std::log(3.0), 1e-15);
  // Regular simplex directions: every off-diagonal similarity is -1/3.
  const Matrix simplex = Matrix::from_rows({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}});
  EXPECT_NEAR(contrastive_loss(simplex, kTau025).value, std::log(3.0), 1e-14);
}

TEST(ContrastiveLoss, MatchesOracleFourUnitVectors) {
  Matrix batch(4, 2);
  const double deg[] = {0, 100, 20, 200};
  for (std::size_t i = 0; i < 4; ++i) {
    batch(i, 0) = std::cos(deg[i] * std::numbers::pi / 180.0);
    batch(i, 1) = std::sin(deg[i] * std::numbers::pi / 180.0);
  }
  const LossResult r = contrastive_loss(batch, kTau025);
  EXPECT_NEAR(r.value, 0.48298057345658051, 1e-13);
  expect_matrix_near(r.grads,
                     {{0.0, 0.14071155264284481},
                      {1.7460715730615865, 0.30787952857882944},
                      {-0.2464568832205033, 0.67713472151749761},
                      {0.31182122485336337, -0.85672177419129833}},
                     1e-12);
}

TEST(ContrastiveLoss, Errors) {
  try {
    contrastive_loss(Matrix(3, 2, 1.0), kTau025);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BatchTooSmall);
  }
  Matrix degenerate(2, 2, 1.0);
  degenerate(1, 0) = degenerate(1, 1) = 0.0;
  try {
    contrastive_loss(degenerate, kTau025);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateVector);
  }
}

TEST(ContrastiveLoss, SmallTemperatureStaysFinite) {
  Rng rng(2);
  const Matrix batch = random_batch(rng, 8, 3);
  const LossResult r = contrastive_loss(batch, LossConfig{Objective::Contrastive, 1e-3, 1.0});
  EXPECT_TRUE(std::isfinite(r.value));
  for (double g : r.grads.data()) EXPECT_TRUE(std::isfinite(g));
}

// ---------------------------------------------------------------- msc

TEST(MscLoss, ZeroCenterReducesToContrastive) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Matrix batch = random_batch(rng, 2 * (1 + t % 5), 2 + t % 6, 0.0);
    const auto a = msc_loss(batch, Center::zero(batch.cols()), kTau025);
    const auto b = contrastive_loss(batch, kTau025);
    EXPECT_NEAR(a.value, b.value, 1e-9);
  }
}

TEST(MscLoss, SinglePairIsZero) {
  Rng rng(4);
  EXPECT_EQ(msc_loss(random_batch(rng, 2, 3), random_center(rng, 3), kTau025).value, 0.0);
}

TEST(MscLoss, ScalingOneEmbeddingLeavesValue) {
  Rng rng(5);
  const Matrix batch = random_batch(rng, 6, 4);
  const Center c = random_center(rng, 4);
  const double base = msc_loss(batch, c, kTau025).value;
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    Matrix scaled = batch;
    for (double& v : scaled.row(i)) v *= 7.3;
    EXPECT_NEAR(msc_loss(scaled, c, kTau025).value, base, 1e-9);
  }
}

TEST(MscLoss, MatchesOracleToyCase) {
  const Center c = compute_center(Matrix::from_rows({{1, 0.2, 0.1}, {0.9, -0.1, 0.3}, {1.1, 0.3, -0.2}, {0.8, 0.0, 0.0}}));
  EXPECT_NEAR(c.values()[0], 0.96740292353443894, 1e-15);
  EXPECT_NEAR(c.values()[1], 0.087378014647980704, 1e-15);
  EXPECT_NEAR(c.values()[2], 0.059825443298789194, 1e-15);
  const Matrix batch = Matrix::from_rows({{1.0, 0.5, -0.2}, {0.7, -0.3, 0.4}, {1.2, 0.4, 0.1}, {0.6, -0.1, 0.6}});
  const LossResult r = msc_loss(batch, c, kTau025);
  EXPECT_NEAR(r.value, 0.01263550852567463, 1e-13);
  expect_matrix_near(r.grads,
                     {{0.00099606250914324273, -0.012421824725533438, -0.026074249268117379},
                      {0.00099433994732646333, -0.0061334263808906022, -0.0063401646934892618},
                      {-0.012545269329467905, -0.010122395209490403, 0.19103281279157646},
                      {-0.010429520954875651, 0.075586342760049981, 0.023027244748217316}},
                     1e-11);
  // Same toy case through the combined objective with lambda = 1.
  EXPECT_NEAR(combined_loss(batch, c, LossConfig{Objective::MscPlusAngular, 0.25, 1.0}).value, -0.81799995617973302,
              1e-13);
}

TEST(MscLoss, PostShiftDegenerateIsError) {
  const Center c = Center::from_vector({0.6, 0.8});
  const Matrix batch = Matrix::from_rows({{3, 4}, {1, 0}});
  try {
    msc_loss(batch, c, kTau025);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateVector);
  }
}

// ---------------------------------------------------------------- combined

TEST(CombinedLoss, LambdaZeroIsMsc) {
  Rng rng(6);
  const Matrix batch = random_batch(rng, 8, 3);
  const Center c = random_center(rng, 3);
  const auto a = combined_loss(batch, c, LossConfig{Objective::MscPlusAngular, 0.25, 0.0});
  const auto b = msc_loss(batch, c, kTau025);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.grads, b.grads);
}

TEST(CombinedLoss, SinglePairIsMeanAngular) {
  Rng rng(7);
  const Matrix batch = random_batch(rng, 2, 3);
  const Center c = random_center(rng, 3);
  const double expected =
      0.5 * (angular_center_loss(batch.row(0), c).value + angular_center_loss(batch.row(1), c).value);
  EXPECT_NEAR(combined_loss(batch, c, LossConfig{Objective::MscPlusAngular, 0.25, 1.0}).value, expected, 1e-15);
}

// ---------------------------------------------------------------- properties

TEST(LossProperties, AnalyticGradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (auto objective : {Objective::Center, Objective::AngularCenter, Objective::Contrastive, Objective::Msc,
                         Objective::MscPlusAngular}) {
    const LossConfig cfg{objective, 0.25, 1.0};
    for (int t = 0; t < 24; ++t) {
      const std::size_t d = t % 2 ? 8 : 3;
      const std::size_t n = std::size_t{2} << ((t / 2) % 3);
      const Matrix batch = random_batch(rng, n, d);
      const Center c = random_center(rng, d);
      const LossResult r = batch_loss(batch, c, cfg);
      const Matrix numeric = oracle::finite_difference(batch, [&](const Matrix& b) { return batch_loss(b, c, cfg).value; });
      EXPECT_LT(max_rel_error(r.grads, numeric), 1e-4) << objective_name(objective) << " trial " << t;
    }
  }
}

TEST(LossProperties, MatchesDirectLongDoubleEvaluation) {
  Rng rng(9);
  for (int t = 0; t < 40; ++t) {
    const std::size_t d = 2 + t % 7;
    const Matrix batch = random_batch(rng, 2 * (1 + t % 6), d);
    const Center c = random_center(rng, d);
    std::vector<long double> cl(c.values().begin(), c.values().end());
    const auto rows = oracle::to_rows(batch);
    EXPECT_NEAR(contrastive_loss(batch, kTau025).value, static_cast<double>(oracle::ntxent(rows, 0.25L)), 1e-12);
    EXPECT_NEAR(msc_loss(batch, c, kTau025).value, static_cast<double>(oracle::ntxent(rows, 0.25L, &cl)), 1e-12);
  }
}

TEST(LossProperties, ScaleInvarianceExceptCenter) {
  Rng rng(10);
  for (int t = 0; t < 30; ++t) {
    const Matrix batch = random_batch(rng, 6, 5);
    const Center c = random_center(rng, 5);
    Matrix scaled = batch;
    for (std::size_t i = 0; i < scaled.rows(); ++i)
      if (rng.below(2)) {
        const double a = std::exp(2.0 * rng.normal());
        for (double& v : scaled.row(i)) v *= a;
      }
    for (auto o : {Objective::AngularCenter, Objective::Contrastive, Objective::Msc, Objective::MscPlusAngular}) {
      const LossConfig cfg{o, 0.25, 1.0};
      EXPECT_NEAR(batch_loss(batch, c, cfg).value, batch_loss(scaled, c, cfg).value, 1e-9) << objective_name(o);
    }
    Matrix doubled = batch;
    for (double& v : doubled.row(0)) v *= 2.0;
    const LossConfig center{Objective::Center, 0.25, 1.0};
    EXPECT_NE(batch_loss(batch, c, center).value, batch_loss(doubled, c, center).value);
  }
}

TEST(LossProperties, PairConsistentPermutationEquivariance) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t half = 1 + t % 4;
    const Matrix batch = random_batch(rng, 2 * half, 4);
    const Center c = random_center(rng, 4);
    // Permute pairs, and swap the two views of random pairs.
    std::vector<std::size_t> pair_perm(half);
    std::iota(pair_perm.begin(), pair_perm.end(), 0);
    rng.shuffle(std::span(pair_perm));
    std::vector<std::size_t> src(2 * half);
    for (std::size_t p = 0; p < half; ++p) {
      const bool swap = rng.below(2);
      src[p] = pair_perm[p] + (swap ? half : 0);
      src[p + half] = pair_perm[p] + (swap ? 0 : half);
    }
    Matrix permuted(batch.rows(), batch.cols());
    for (std::size_t i = 0; i < src.size(); ++i)
      std::copy(batch.row(src[i]).begin(), batch.row(src[i]).end(), permuted.row(i).begin());
    for (auto o : {Objective::Contrastive, Objective::Msc, Objective::MscPlusAngular}) {
      const LossConfig cfg{o, 0.25, 1.0};
      const auto a = batch_loss(batch, c, cfg);
      const auto b = batch_loss(permuted, c, cfg);
      EXPECT_NEAR(a.value, b.value, 1e-12);
      for (std::size_t i = 0; i < src.size(); ++i)
        for (std::size_t j = 0; j < batch.cols(); ++j) EXPECT_NEAR(b.grads(i, j), a.grads(src[i], j), 1e-12);
    }
  }
}

TEST(LossProperties, ContrastiveValuesNonNegative) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    const Matrix batch = random_batch(rng, 2 * (1 + t % 8), 3, 3.0);
    const Center c = random_center(rng, 3);
    EXPECT_GE(contrastive_loss(batch, kTau025).value, -1e-12);
    EXPECT_GE(msc_loss(batch, c, kTau025).value, -1e-12);
  }
}

TEST(LossConfig, Validation) {
  EXPECT_THROW((LossConfig{Objective::Msc, 0.0, 1.0}.validate()), Error);
  EXPECT_THROW((LossConfig{Objective::Msc, 0.25, NAN}.validate()), Error);
  EXPECT_EQ(parse_objective("msc+ang"), Objective::MscPlusAngular);
  EXPECT_EQ(parse_objective("ang-center"), Objective::AngularCenter);
  EXPECT_THROW(parse_objective("svdd"), Error);
}
