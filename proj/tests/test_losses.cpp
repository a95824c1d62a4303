#include <gtest/gtest.h>

#include <cmath>

#include "cmcd/errors.hpp"
#include "cmcd/losses.hpp"
#include "cmcd/rng.hpp"
#include "support/oracles.hpp"

using namespace cmcd;

namespace {

const Matrix kEye2(2, 2, std::vector<double>{1, 0, 0, 1});

Tensor T(const Matrix& m) { return Tensor::from_matrix(m); }

// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
Matrix random_orthogonal(Rng& rng, std::size_t d) {
  Matrix q(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    for (std::size_t j = 0; j < i; ++j) {
      double p = 0.0;
      for (std::size_t k = 0; k < d; ++k) p += v[k] * q(j, k);
      for (std::size_t k = 0; k < d; ++k) v[k] -= p * q(j, k);
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (std::size_t k = 0; k < d; ++k) q(i, k) = v[k] / n;
  }
  return q;
}

Matrix times(const Matrix& a, const Matrix& b) {
  return matmul(T(a), T(b)).to_matrix();
}

}  // namespace

TEST(Gibbs, TwoByTwoExample) {
  const auto g = gibbs_matrix(kEye2, kEye2, 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(g.p(0, 0), e / (e + 1.0), 1e-15);
  EXPECT_NEAR(g.p(1, 0), 1.0 / (e + 1.0), 1e-15);
  EXPECT_NEAR(g.p(0, 0), 0.73106, 1e-5);
}

TEST(Gibbs, IdenticalRowsAreUniform) {
  const Matrix z(3, 2, std::vector<double>{0.6, 0.8, 0.6, 0.8, 0.6, 0.8});
  for (double x : gibbs_matrix(z, z, 0.5).p.data) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(Gibbs, ColumnsSumToOneAndEntriesInOpenUnitInterval) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto z1 = oracle::random_unit_rows(rng, 3, 5), z2 = oracle::random_unit_rows(rng, 3, 5);
    const auto g = gibbs_matrix(z1, z2, rng.uniform(0.05, 2.0));
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_GT(g.p(i, j), 0.0);
        EXPECT_LT(g.p(i, j), 1.0);
        s += g.p(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Gibbs, RejectsNonPositiveTemperature) {
  EXPECT_THROW(gibbs_matrix(kEye2, kEye2, 0.0), ConfigError);
  EXPECT_THROW(cmd_loss(T(kEye2), T(kEye2), -1.0), ConfigError);
  EXPECT_THROW(cmc_loss(T(kEye2), T(kEye2), 0.0), ConfigError);
}

TEST(InfoNce, TwoByTwoExample) {
  const double e = std::exp(1.0);
  const double v = info_nce(T(kEye2), T(kEye2), 1.0).item();
  EXPECT_NEAR(v, -2.0 * std::log(e / (e + 1.0)), 1e-14);
  EXPECT_NEAR(v, 0.62652, 1e-5);
}

TEST(InfoNce, IdenticalRowsGiveMLogM) {
  const Matrix z(4, 2, std::vector<double>{1, 0, 1, 0, 1, 0, 1, 0});
  EXPECT_NEAR(info_nce(T(z), T(z), 0.7).item(), 4.0 * std::log(4.0), 1e-12);
}

TEST(InfoNce, NeedsNegatives) {
  const Matrix z(1, 2, std::vector<double>{1, 0});
  EXPECT_THROW(info_nce(T(z), T(z), 0.5), DimensionError);
}

TEST(InfoNce, MeanReductionDividesByBatch) {
  Rng rng(2);
  const auto u = oracle::random_unit_rows(rng, 4, 3), v = oracle::random_unit_rows(rng, 4, 3);
  EXPECT_NEAR(info_nce(T(u), T(v), 0.5, Reduction::kMean).item(),
              info_nce(T(u), T(v), 0.5).item() / 4.0, 1e-14);
}

// Closed form: two columns, each with entropy of (e/(e+1), 1/(e+1)).
static double two_by_two_entropy() {
  const double e = std::exp(1.0), p = e / (e + 1.0), q = 1.0 / (e + 1.0);
  return -2.0 * (p * std::log(p) + q * std::log(q));
}

TEST(Cmd, TwoByTwoExampleIsTeacherEntropy) {
  const double v = cmd_loss(T(kEye2), T(kEye2), 1.0).item();
  EXPECT_NEAR(v, two_by_two_entropy(), 1e-14);
  EXPECT_NEAR(v, 1.16441, 1e-5);
  EXPECT_NEAR(v, gibbs_entropy(gibbs_matrix(kEye2, kEye2, 1.0)), 1e-12);
}

TEST(Cmd, GibbsInequality) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const auto za = oracle::random_unit_rows(rng, 4, 3), zb = oracle::random_unit_rows(rng, 4, 3);
    const double h = gibbs_entropy(gibbs_matrix(za, za, 0.5));
    EXPECT_GE(cmd_loss(T(za), T(zb), 0.5).item(), h - 1e-12);
    EXPECT_NEAR(cmd_loss(T(za), T(za), 0.5).item(), h, 1e-9);
  }
}

TEST(Cmd, NoGradientReachesTeacher) {
  Rng rng(1);
  Tensor za = Tensor::from_matrix(oracle::random_unit_rows(rng, 3, 2), true);
  Tensor zb = Tensor::from_matrix(oracle::random_unit_rows(rng, 3, 2), true);
  cmd_loss(za, zb, 0.5).backward();
  EXPECT_FALSE(za.has_grad());
  EXPECT_TRUE(zb.has_grad());
}

TEST(Cmc, TwoByTwoExampleAndSymmetry) {
  EXPECT_NEAR(cmc_loss(T(kEye2), T(kEye2), 1.0).item(), 1.25304, 1e-5);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto a = oracle::random_unit_rows(rng, 4, 3), b = oracle::random_unit_rows(rng, 4, 3);
    EXPECT_NEAR(cmc_loss(T(a), T(b), 0.5).item(), cmc_loss(T(b), T(a), 0.5).item(), 1e-12);
  }
}

TEST(Cmc, FreezeFlagControlsTeacherGradient) {
  Rng rng(1);
  const auto a = oracle::random_unit_rows(rng, 3, 2), b = oracle::random_unit_rows(rng, 3, 2);
  {
    Tensor za = Tensor::from_matrix(a, true), zb = Tensor::from_matrix(b, true);
    cmc_loss(za, zb, 0.5).backward();
    EXPECT_FALSE(za.has_grad());
  }
  {
    Tensor za = Tensor::from_matrix(a, true), zb = Tensor::from_matrix(b, true);
    cmc_loss(za, zb, 0.5, Reduction::kSum, false).backward();
    EXPECT_TRUE(za.has_grad());
  }
}

TEST(Interp, EndpointsAndMidpoint) {
  const double e = std::exp(1.0);
  const double cmc = -4.0 * std::log(e / (e + 1.0));
  EXPECT_NEAR(interpolated_loss(0.5, T(kEye2), T(kEye2), 1.0).item(),
              0.5 * (cmc + two_by_two_entropy()), 1e-14);
  Rng rng(7);
  const auto a = oracle::random_unit_rows(rng, 4, 3), b = oracle::random_unit_rows(rng, 4, 3);
  EXPECT_EQ(interpolated_loss(0.0, T(a), T(b), 0.5).item(), cmd_loss(T(a), T(b), 0.5).item());
  EXPECT_EQ(interpolated_loss(1.0, T(a), T(b), 0.5).item(), cmc_loss(T(a), T(b), 0.5).item());
  EXPECT_THROW(interpolated_loss(1.5, T(a), T(b), 0.5), ConfigError);
  EXPECT_THROW(interpolated_loss(-0.1, T(a), T(b), 0.5), ConfigError);
}

TEST(Interp, AffineInAlpha) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto a = oracle::random_unit_rows(rng, 4, 3), b = oracle::random_unit_rows(rng, 4, 3);
    const double l0 = interpolated_loss(0.0, T(a), T(b), 0.5).item();
    const double l5 = interpolated_loss(0.5, T(a), T(b), 0.5).item();
    const double l1 = interpolated_loss(1.0, T(a), T(b), 0.5).item();
    EXPECT_NEAR(l5, 0.5 * (l0 + l1), 1e-12);
  }
}

TEST(Ce, ExamplesAndErrors) {
  const std::vector<int> y{0, 1};
  EXPECT_NEAR(ce_loss(T(Matrix(2, 2)), y).item(), std::log(2.0), 1e-15);
  double prev = 1e300;
  for (double mag : {0.0, 1.0, 4.0, 16.0, 64.0}) {
    const Matrix logits(1, 3, std::vector<double>{mag, 0, 0});
    const double l = ce_loss(T(logits), std::vector<int>{0}).item();
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_THROW(ce_loss(T(Matrix(2, 2)), std::vector<int>{0, 2}), DimensionError);
  EXPECT_THROW(ce_loss(T(Matrix(2, 2)), std::vector<int>{0, -1}), DimensionError);
}

TEST(Alignment, Examples) {
  Rng rng(9);
  const auto a = oracle::random_unit_rows(rng, 4, 3);
  EXPECT_EQ(l2_align_loss(T(a), T(a)).item(), 0.0);
  const Matrix u(1, 2, std::vector<double>{1, 0}), v(1, 2, std::vector<double>{0, 1});
  EXPECT_NEAR(l2_align_loss(T(u), T(v)).item(), 2.0, 1e-15);
  EXPECT_NEAR(stats_align_loss(T(a), T(a)).item(), 0.0, 1e-15);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  EXPECT_NEAR(stats_align_loss(T(a), T(select_rows(a, perm))).item(), 0.0, 1e-15);
  EXPECT_THROW(stats_align_loss(T(u), T(v)), DimensionError);
  EXPECT_THROW(l2_align_loss(T(a), T(u)), DimensionError);
}

TEST(Oracle, EveryLossMatchesNaiveImplementation) {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 2 + rng.below(3), d = 1 + rng.below(4);
    const double tau = rng.uniform(0.1, 1.5);
    const auto a = oracle::random_unit_rows(rng, m, d), b = oracle::random_unit_rows(rng, m, d);
    const auto ra = oracle::rows_of(a), rb = oracle::rows_of(b);
    const double alpha = rng.uniform();
    EXPECT_NEAR(info_nce(T(a), T(b), tau).item(), oracle::info_nce(ra, rb, tau), 1e-10);
    EXPECT_NEAR(cmd_loss(T(a), T(b), tau).item(), oracle::cmd(ra, rb, tau), 1e-10);
    EXPECT_NEAR(cmc_loss(T(a), T(b), tau).item(), oracle::cmc(ra, rb, tau), 1e-10);
    EXPECT_NEAR(interpolated_loss(alpha, T(a), T(b), tau).item(),
                oracle::interp(alpha, ra, rb, tau), 1e-10);
    EXPECT_NEAR(l2_align_loss(T(a), T(b)).item(), oracle::l2_align(ra, rb), 1e-12);
    EXPECT_NEAR(stats_align_loss(T(a), T(b)).item(), oracle::stats_align(ra, rb), 1e-12);
    const auto logits = oracle::random_matrix(rng, m, d + 1);
    std::vector<int> y(m);
    for (auto& c : y) c = static_cast<int>(rng.below(d + 1));
    EXPECT_NEAR(ce_loss(T(logits), y).item(), oracle::ce(oracle::rows_of(logits), y), 1e-12);
  }
}

TEST(Gradient, EveryLossPassesFiniteDifferences) {
  Rng rng(12);
  for (int t = 0; t < 5; ++t) {
    const auto a = oracle::random_matrix(rng, 4, 4), b = oracle::random_matrix(rng, 4, 4);
    const Tensor ta = T(a);
    std::vector<int> y{0, 3, 1, 2};
    EXPECT_LE(oracle::gradient_error([&](const Tensor& x) { return info_nce(ta, x, 0.5); }, b), 1e-4);
    EXPECT_LE(oracle::gradient_error([&](const Tensor& x) { return info_nce(x, ta, 0.5); }, b), 1e-4);
    EXPECT_LE(oracle::gradient_error([&](const Tensor& x) { return cmd_loss(ta, x, 0.5); }, b), 1e-4);
    EXPECT_LE(oracle::gradient_error([&](const Tensor& x) { return cmc_loss(ta, x, 0.5); }, b), 1e-4);
    EXPECT_LE(oracle::gradient_error(
                  [&](const Tensor& x) { return cmc_loss(x, ta, 0.5, Reduction::kSum, false); }, b),
              1e-4);
    EXPECT_LE(oracle::gradient_error(
                  [&](const Tensor& x) { return interpolated_loss(0.3, ta, x, 0.5); }, b),
              1e-4);
    EXPECT_LE(oracle::gradient_error([&](const Tensor& x) { return ce_loss(x, y); }, b), 1e-4);
    EXPECT_LE(oracle::gradient_error([&](const Tensor& x) { return l2_align_loss(ta, x); }, b), 1e-4);
    EXPECT_LE(oracle::gradient_error([&](const Tensor& x) { return stats_align_loss(ta, x); }, b),
              1e-4);
  }
}

TEST(Invariance, JointRotationLeavesLossesUnchanged) {
  Rng rng(13);
  for (int t = 0; t < 20; ++t) {
    const auto a = oracle::random_unit_rows(rng, 4, 5), b = oracle::random_unit_rows(rng, 4, 5);
    const Matrix q = random_orthogonal(rng, 5);
    const Matrix qa = times(a, q), qb = times(b, q);
    EXPECT_NEAR(info_nce(T(a), T(b), 0.5).item(), info_nce(T(qa), T(qb), 0.5).item(), 1e-8);
    EXPECT_NEAR(cmd_loss(T(a), T(b), 0.5).item(), cmd_loss(T(qa), T(qb), 0.5).item(), 1e-8);
    EXPECT_NEAR(cmc_loss(T(a), T(b), 0.5).item(), cmc_loss(T(qa), T(qb), 0.5).item(), 1e-8);
    EXPECT_NEAR(interpolated_loss(0.4, T(a), T(b), 0.5).item(),
                interpolated_loss(0.4, T(qa), T(qb), 0.5).item(), 1e-8);
    EXPECT_NEAR(l2_align_loss(T(a), T(b)).item(), l2_align_loss(T(qa), T(qb)).item(), 1e-8);
  }
}
