#include <array>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "frictionml/error.hpp"
#include "frictionml/pca.hpp"
#include "oracles.hpp"

using namespace frictionml;

namespace {

Eigen::MatrixXd sample_matrix(std::mt19937_64& rng, int n, int dim) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

}  // namespace

TEST(Covariance, HandComputed) {
  Eigen::MatrixXd x(2, 2);
  x << 1, 1, -1, -1;
  EXPECT_EQ(covariance(x), Eigen::MatrixXd::Ones(2, 2));
  Eigen::MatrixXd rep = Eigen::MatrixXd::Constant(4, 3, 2.5);
  EXPECT_EQ(covariance(rep), Eigen::MatrixXd::Zero(3, 3));
  std::mt19937_64 rng(1);
  auto c = covariance(sample_matrix(rng, 30, 5));
  EXPECT_EQ(c, c.transpose());
  EXPECT_THROW(covariance(Eigen::MatrixXd::Ones(1, 3)), ArgumentError);
}

TEST(EigSymmetric, TwoByTwoAllOnes) {
  Eigen::MatrixXd c(2, 2);
  c << 1, 1, 1, 1;
  auto e = eig_symmetric(c);
  EXPECT_NEAR(e.values(0), 2.0, 1e-12);
  EXPECT_NEAR(e.values(1), 0.0, 1e-12);
  EXPECT_NEAR(e.vectors(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(e.vectors(1, 0), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(EigSymmetric, IdentityAndDiagonal) {
  auto e = eig_symmetric(Eigen::MatrixXd::Identity(4, 4));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(e.values(i), 1.0);
  Eigen::MatrixXd d = Eigen::Vector3d(3, 1, 2).asDiagonal();
  e = eig_symmetric(d);
  EXPECT_EQ(e.values, Eigen::Vector3d(3, 2, 1));
}

TEST(EigSymmetric, RejectsAsymmetricInput) {
  Eigen::MatrixXd c(2, 2);
  c << 1, 2, 0, 1;
  EXPECT_THROW(eig_symmetric(c), ContractError);
  EXPECT_THROW(eig_symmetric(Eigen::MatrixXd::Ones(2, 3)), ContractError);
}

TEST(EigSymmetric, AgreesWithCharacteristicPolynomialOnSmallGrid) {
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b)
      for (int d = -2; d <= 2; ++d) {
        Eigen::MatrixXd c(2, 2);
        c << a, b, b, d;
        auto got = eig_symmetric(c);
        auto want = oracle::eigenvalues_2x2(a, b, d);
        EXPECT_NEAR(got.values(0), want[0], 1e-8);
        EXPECT_NEAR(got.values(1), want[1], 1e-8);
      }
}

TEST(EigSymmetric, ReconstructsRandomMatrices) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 10);
    auto x = sample_matrix(rng, 3 * n, n);
    const Eigen::MatrixXd c = covariance(x);
    auto e = eig_symmetric(c);
    const Eigen::MatrixXd back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    EXPECT_LT((back - c).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(e.values.sum(), c.trace(), 1e-8);
    EXPECT_LT((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
    for (int i = 1; i < n; ++i) EXPECT_GE(e.values(i - 1), e.values(i));
  }
}

TEST(TotalVariance, HandArithmetic) {
  auto s = total_variance(Eigen::Vector2d(2, 0), 1);
  EXPECT_DOUBLE_EQ(s.t_n, 1.0);
  EXPECT_DOUBLE_EQ(s.fraction, 1.0);
  Eigen::VectorXd flat = Eigen::VectorXd::Constant(5, 0.7);
  EXPECT_NEAR(total_variance(flat, 2).fraction, 0.4, 1e-15);
  EXPECT_EQ(total_variance(Eigen::Vector3d(3, 2, 1), 3).fraction, 1.0);
  EXPECT_THROW(total_variance(flat, 0), ArgumentError);
  EXPECT_THROW(total_variance(flat, 6), ArgumentError);
}

TEST(FitPca, RankOneDataKeepsOneComponent) {
  Eigen::MatrixXd x(20, 4);
  for (int i = 0; i < 20; ++i) x.row(i) = (i - 7.5) * Eigen::RowVector4d(1, -2, 0.5, 3);
  auto m = fit_pca(x, VarianceFraction{0.99});
  EXPECT_EQ(m.n_keep, 1u);
  EXPECT_THROW(fit_pca(x, VarianceFraction{0.0}), ArgumentError);
  EXPECT_THROW(fit_pca(x, KeepCount{0}), ArgumentError);
}

TEST(FitPca, DefaultKeepsFourteen) {
  EXPECT_EQ(std::get<KeepCount>(PcaPolicy{}).n_keep, 14u);
  std::mt19937_64 rng(9);
  auto m = fit_pca(sample_matrix(rng, 50, 20), PcaPolicy{});
  EXPECT_EQ(m.n_keep, 14u);
  EXPECT_EQ(fit_pca(sample_matrix(rng, 50, 6), PcaPolicy{}).n_keep, 6u);
}

TEST(FitPca, FullBasisPreservesDistances) {
  std::mt19937_64 rng(4);
  auto x = sample_matrix(rng, 25, 6);
  auto m = fit_pca(x, KeepCount{6});
  auto p = project_rows(m, x);
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j)
      EXPECT_NEAR((p.row(i) - p.row(j)).norm(), (x.row(i) - x.row(j)).norm(), 1e-8);
}

TEST(Project, MeanAndEigenvectors) {
  std::mt19937_64 rng(5);
  auto x = sample_matrix(rng, 40, 5);
  auto m = fit_pca(x, KeepCount{3});
  EXPECT_LT(project(m, m.mean).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::VectorXd p = project(m, m.mean + m.eigenvectors.col(0));
  EXPECT_NEAR(p(0), 1.0, 1e-12);
  EXPECT_NEAR(p(1), 0.0, 1e-12);
  EXPECT_NEAR(p(2), 0.0, 1e-12);
}

TEST(Project, ComponentVariancesEqualEigenvalues) {
  std::mt19937_64 rng(6);
  auto x = sample_matrix(rng, 60, 4);
  auto m = fit_pca(x, KeepCount{4});
  auto p = project_rows(m, x);
  for (int k = 0; k < 4; ++k) {
    const double var = p.col(k).squaredNorm() / 60.0;
    EXPECT_NEAR(var, m.eigenvalues(k), 1e-8);
  }
}
