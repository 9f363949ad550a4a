#include <gtest/gtest.h>

#include <filesystem>

#include "msc/adapter.hpp"
#include "msc/losses.hpp"
#include "support/oracles.hpp"

using namespace msc;

namespace {

AdapterParams random_params(Rng& rng, std::size_t d, std::size_t h) {
  AdapterParams p = AdapterParams::zeros(d, h);
  p.for_each([&](double& v) { v = 0.4 * rng.normal(); });
  return p;
}

}  // namespace

TEST(AdapterForward, ZeroParamsIsIdentity) {
  const AdapterParams p = AdapterParams::zeros(3, 5);
  const Vector x{0.3, -2.0, 1.5};
  EXPECT_EQ(adapter_forward(x, p), x);
}

TEST(AdapterForward, IdentityInitIsIdentity) {
  const AdapterParams p = AdapterParams::identity_init(4, 4, 7);
  const Vector x{0.3, -2.0, 1.5, 0.1};
  EXPECT_EQ(adapter_forward(x, p), x);
  EXPECT_NE(p.w1, Matrix(4, 4));
}

TEST(AdapterForward, ZeroInputZeroBiases) {
  Rng rng(1);
  AdapterParams p = random_params(rng, 3, 3);
  std::fill(p.b1.begin(), p.b1.end(), 0.0);
  std::fill(p.b2.begin(), p.b2.end(), 0.0);
  EXPECT_EQ(adapter_forward(Vector{0, 0, 0}, p), (Vector{0, 0, 0}));
}

TEST(AdapterForward, MatchesOracle) {
  AdapterParams p = AdapterParams::zeros(2, 3);
  p.w1 = Matrix::from_rows({{0.5, -0.2}, {0.1, 0.4}, {-0.3, 0.3}});
  p.b1 = {0.05, -0.1, 0.2};
  p.w2 = Matrix::from_rows({{0.2, -0.1, 0.3}, {0.4, 0.5, -0.6}});
  p.b2 = {0.01, -0.02};
  const Vector y = adapter_forward(Vector{1.5, -0.7}, p);
  EXPECT_NEAR(y[0], 1.698, 1e-15);
  EXPECT_NEAR(y[1], -0.34399999999999993, 1e-15);
}

TEST(AdapterForward, DimensionMismatch) {
  EXPECT_THROW(adapter_forward(Vector{1, 2, 3}, AdapterParams::zeros(2, 2)), Error);
}

TEST(AdapterBackward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(2);
  const AdapterParams p = random_params(rng, 3, 4);
  Matrix batch(5, 3);
  for (double& v : batch.data()) v = rng.normal();
  EXPECT_EQ(adapter_backward(batch, p, Matrix(5, 3)), AdapterGrads::zeros(3, 4));
}

TEST(AdapterBackward, CenterLossFiniteDifference) {
  Rng rng(3);
  const AdapterParams p = AdapterParams::identity_init(3, 3, 11);
  const Center c = Center::from_vector({0.2, -0.3, 0.4});
  const Matrix x = Matrix::from_rows({{0.7, 0.1, -0.5}});
  const LossResult loss = center_loss(adapter_forward(x.row(0), p), c);
  const AdapterGrads g = adapter_backward(x, p, loss.grads);

  AdapterParams probe = p;
  Vector numeric;
  probe.for_each([&](double& v) {
    const double saved = v;
    v = saved + 1e-6;
    const double up = center_loss(adapter_forward(x.row(0), probe), c).value;
    v = saved - 1e-6;
    const double down = center_loss(adapter_forward(x.row(0), probe), c).value;
    v = saved;
    numeric.push_back((up - down) / 2e-6);
  });
  const Vector analytic = g.flatten();
  double diff = 0, scale = 0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
    scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
  }
  EXPECT_LT(diff / scale, 1e-4);
}

TEST(AdapterBackward, DuplicatedRowsDoubleTheGradient) {
  Rng rng(4);
  const AdapterParams p = random_params(rng, 4, 6);
  Matrix one(1, 4), two(2, 4), up1(1, 4), up2(2, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    one(0, j) = two(0, j) = two(1, j) = rng.normal();
    up1(0, j) = up2(0, j) = up2(1, j) = rng.normal();
  }
  const Vector g1 = adapter_backward(one, p, up1).flatten();
  const Vector g2 = adapter_backward(two, p, up2).flatten();
  for (std::size_t k = 0; k < g1.size(); ++k) EXPECT_NEAR(g2[k], 2.0 * g1[k], 1e-14);
}

TEST(AdapterBackward, ReluSubgradientAtZeroIsZero) {
  AdapterParams p = AdapterParams::zeros(2, 1);
  p.w1 = Matrix::from_rows({{1.0, -1.0}});
  p.w2 = Matrix::from_rows({{1.0}, {1.0}});
  // Pre-activation exactly 0.
  const AdapterGrads g = adapter_backward(Matrix::from_rows({{0.5, 0.5}}), p, Matrix::from_rows({{1.0, 1.0}}));
  EXPECT_EQ(g.b1[0], 0.0);
  EXPECT_EQ(g.w1(0, 0), 0.0);
}

TEST(SgdStep, Examples) {
  Rng rng(5);
  const AdapterParams p = random_params(rng, 2, 2);
  const AdapterGrads g = random_params(rng, 2, 2);
  EXPECT_EQ(sgd_step(p, g, 0.0, 0.5), p);
  EXPECT_EQ(sgd_step(p, AdapterGrads::zeros(2, 2), 0.3, 0.0), p);

  AdapterParams single = AdapterParams::zeros(2, 1);
  single.b2[0] = 1.0;
  EXPECT_DOUBLE_EQ(sgd_step(single, AdapterGrads::zeros(2, 1), 0.1, 0.5).b2[0], 0.95);
}

TEST(SgdStep, NonFiniteUpdateAborts) {
  AdapterParams p = AdapterParams::zeros(2, 1);
  AdapterGrads g = AdapterGrads::zeros(2, 1);
  g.b1[0] = std::numeric_limits<double>::infinity();
  try {
    sgd_step(p, g, 0.1, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteUpdate);
  }
}

TEST(Checkpoint, RoundTripAndLayout) {
  Rng rng(6);
  const AdapterParams p = random_params(rng, 3, 5);
  const auto path = std::filesystem::temp_directory_path() / "msc_ckpt_test.msca";
  save_checkpoint(p, path);
  EXPECT_EQ(load_checkpoint(path), p);
  const std::string bytes = detail::read_file(path);
  EXPECT_EQ(bytes.substr(0, 4), "MSCA");
  EXPECT_EQ(bytes.size(), 4u + 4 + 8 + 8 + 8 * p.size());
  detail::write_file(path, bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}
