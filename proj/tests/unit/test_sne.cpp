#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "frictionml/error.hpp"
#include "frictionml/sne.hpp"
#include "oracles.hpp"

using namespace frictionml;

namespace {

Eigen::MatrixXd gaussian(std::mt19937_64& rng, int n, int dim, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

void expect_row_stochastic(const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    EXPECT_NEAR(m.row(i).sum(), 1.0, 1e-10);
    EXPECT_EQ(m(i, i), 0.0);
    EXPECT_GE(m.row(i).minCoeff(), 0.0);
  }
}

// Best accuracy of any line through the plane, found by sweeping 720
// directions and every threshold along each.
bool linearly_separable(const Eigen::MatrixXd& y, const std::vector<int>& labels) {
  const auto n = y.rows();
  for (int a = 0; a < 720; ++a) {
    const double th = M_PI * a / 720.0;
    std::vector<std::pair<double, int>> proj;
    for (Eigen::Index i = 0; i < n; ++i)
      proj.emplace_back(std::cos(th) * y(i, 0) + std::sin(th) * y(i, 1), labels[static_cast<std::size_t>(i)]);
    std::sort(proj.begin(), proj.end());
    for (Eigen::Index cut = 1; cut < n; ++cut) {
      bool lo0 = true, hi1 = true, lo1 = true, hi0 = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int l = proj[static_cast<std::size_t>(i)].second;
        if (i < cut) {
          lo0 = lo0 && l == 0;
          lo1 = lo1 && l == 1;
        } else {
          hi1 = hi1 && l == 1;
          hi0 = hi0 && l == 0;
        }
      }
      if ((lo0 && hi1) || (lo1 && hi0)) return true;
    }
  }
  return false;
}

}  // namespace

TEST(ConditionalP, EquidistantPointsAreUniform) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Identity(3, 3);
  auto cp = conditional_p(x, 1.5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) EXPECT_NEAR(cp.p(i, j), 0.5, 1e-12);
}

TEST(ConditionalP, TwoPointsGiveCertainNeighbour) {
  Eigen::MatrixXd x(2, 1);
  x << 0, 3;
  auto cp = conditional_p(x, 1.0);
  EXPECT_EQ(cp.p(0, 1), 1.0);
  EXPECT_EQ(cp.p(1, 0), 1.0);
}

TEST(ConditionalP, MatchesPerplexityOnRandomData) {
  std::mt19937_64 rng(2);
  auto x = gaussian(rng, 60, 5);
  auto cp = conditional_p(x, 10.0);
  expect_row_stochastic(cp.p);
  EXPECT_TRUE(cp.unconverged.empty());
  for (Eigen::Index i = 0; i < 60; ++i) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < 60; ++j)
      if (cp.p(i, j) > 0) h -= cp.p(i, j) * std::log2(cp.p(i, j));
    EXPECT_NEAR(std::exp2(h), 10.0, 1e-4);
  }
}

TEST(ConditionalQ, UniformForEquidistantAndScaleSensitive) {
  Eigen::MatrixXd y(3, 2);
  y << 0, 0, 1, 0, 0.5, std::sqrt(3.0) / 2;
  auto q = conditional_q(y);
  EXPECT_NEAR(q(0, 1), 0.5, 1e-12);
  EXPECT_NEAR((conditional_q(3.0 * y) - q).cwiseAbs().maxCoeff(), 0.0, 1e-12);

  Eigen::MatrixXd line(3, 1);
  line << 0, 1, 3;
  auto q1 = conditional_q(line);
  auto q2 = conditional_q(2.0 * line);
  // direct evaluation of row 0
  const double a = std::exp(-1.0), b = std::exp(-9.0);
  EXPECT_NEAR(q1(0, 1), a / (a + b), 1e-14);
  EXPECT_GT(std::abs(q1(0, 1) - q2(0, 1)), 1e-4);
  std::mt19937_64 rng(3);
  expect_row_stochastic(conditional_q(gaussian(rng, 20, 2)));
}

TEST(KlCost, HandValues) {
  Eigen::MatrixXd p(2, 2), q(2, 2);
  p << 0, 1, 1, 0;
  EXPECT_EQ(kl_cost(p, p), 0.0);
  Eigen::MatrixXd p3(3, 3), q3(3, 3);
  p3 << 0, 0.9, 0.1, 0.9, 0, 0.1, 0.1, 0.9, 0;
  q3 << 0, 0.5, 0.5, 0.5, 0, 0.5, 0.5, 0.5, 0;
  const double per_row = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
  EXPECT_NEAR(kl_cost(p3, q3), 3 * per_row, 1e-14);
  EXPECT_NEAR(per_row, 0.3681, 1e-4);
  q << 0, 0, 1, 0;
  EXPECT_TRUE(std::isinf(kl_cost(p, q)));
}

TEST(KlCost, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    auto p = conditional_p(gaussian(rng, 8, 3), 3.0).p;
    auto q = conditional_q(gaussian(rng, 8, 2));
    EXPECT_GE(kl_cost(p, q), 0.0);
  }
}

TEST(SneGradient, ZeroAtPEqualsQ) {
  std::mt19937_64 rng(4);
  auto y = gaussian(rng, 6, 2);
  auto q = conditional_q(y);
  EXPECT_LT(sne_gradient(q, q, y).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SneGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = conditional_p(gaussian(rng, 6, 4), 2.0).p;
    const Eigen::MatrixXd y = gaussian(rng, 6, 2);
    const Eigen::MatrixXd g = sne_gradient(p, conditional_q(y), y);
    auto cost = [&](const Eigen::VectorXd& flat) {
      const Eigen::MatrixXd yy = Eigen::Map<const Eigen::MatrixXd>(flat.data(), 6, 2);
      return kl_cost(p, conditional_q(yy));
    };
    const Eigen::VectorXd at = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
    const Eigen::VectorXd fd = oracle::central_difference(cost, at, 1e-5);
    const Eigen::VectorXd an = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    EXPECT_LT(oracle::relative_error(an, fd), 1e-4);
    EXPECT_LT(g.colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Embed, ZeroIterationsReturnsInitialLayout) {
  std::mt19937_64 rng(5);
  auto x = gaussian(rng, 10, 3);
  SneConfig c;
  c.n_iter = 0;
  auto s = embed(x, c);
  EXPECT_EQ(s.y, s.y_prev);
  EXPECT_LT(s.y.cwiseAbs().maxCoeff(), 1e-2);
  EXPECT_TRUE(s.cost_history.empty());
}

TEST(Embed, DeterministicForFixedSeed) {
  std::mt19937_64 rng(6);
  auto x = gaussian(rng, 15, 3);
  SneConfig c;
  c.n_iter = 100;
  EXPECT_EQ(embed(x, c).y, embed(x, c).y);
  c.seed = 2;
  EXPECT_NE(embed(x, c).y, embed(x, SneConfig{.n_iter = 100}).y);
}

TEST(Embed, SeparatesTwoClusters) {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd x = gaussian(rng, 40, 10);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) {
    labels[static_cast<std::size_t>(i)] = i < 20 ? 0 : 1;
    if (i >= 20) x.row(i).array() += 8.0;
  }
  SneConfig c;
  c.perplexity = 8.0;
  c.n_iter = 500;
  auto s = embed(x, c);
  EXPECT_TRUE(linearly_separable(s.y, labels));
}

TEST(Embed, CostDecreasesWithoutMomentum) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = gaussian(rng, 10, 4);
    SneConfig c;
    c.perplexity = 3.0;
    c.alpha_early = c.alpha_late = 0.0;
    c.eta = 0.05;
    c.n_iter = 50;
    auto s = embed(x, c);
    for (std::size_t i = 1; i < s.cost_history.size(); ++i)
      EXPECT_LE(s.cost_history[i], s.cost_history[i - 1] + 1e-12);
  }
}

TEST(Embed, RejectsTinyInputs) {
  EXPECT_THROW(embed(Eigen::MatrixXd::Zero(2, 3), SneConfig{}), InsufficientDataError);
}
