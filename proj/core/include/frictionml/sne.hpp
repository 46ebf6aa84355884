#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace frictionml {

struct SneConfig {
  std::size_t out_dims = 2;
  double perplexity = 30.0;  // clamped below n/3 by embed()
  std::size_t n_iter = 1000;
  double eta = 0.1;  // larger steps diverge once a few hundred points share neighbours
  // momentum per iteration: alpha_early before switch_iter, alpha_late after
  double alpha_early = 0.5;
  double alpha_late = 0.8;
  std::size_t switch_iter = 250;
  std::uint64_t seed = 1;
  double sigma_tol = 1e-5;  // tolerance on 2^entropy - perplexity

  double alpha(std::size_t iter) const { return iter < switch_iter ? alpha_early : alpha_late; }
};

struct ConditionalP {
  Eigen::MatrixXd p;                    // row i: p_{j|i}, zero diagonal
  std::vector<double> sigma;            // per-point Gaussian width
  std::vector<std::size_t> unconverged;  // rows whose search hit the cap
};

/// Row-conditional Gaussian neighbour probabilities with sigma_i found by
/// binary search so that 2^H(P_i) matches the perplexity.
ConditionalP conditional_p(const Eigen::MatrixXd& x, double perplexity, double sigma_tol = 1e-5);

// q_{j|i} = exp(-|y_i - y_j|^2) / sum_{k != i} exp(-|y_i - y_k|^2)
Eigen::MatrixXd conditional_q(const Eigen::MatrixXd& y);

// KL(P || Q) summed over rows; +inf when q = 0 where p > 0.
double kl_cost(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q);

// dC/dy_i = 2 sum_j (p_{j|i} - q_{j|i} + p_{i|j} - q_{i|j})(y_i - y_j)
Eigen::MatrixXd sne_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const Eigen::MatrixXd& y);

struct SneState {
  Eigen::MatrixXd p;
  Eigen::MatrixXd y;
  Eigen::MatrixXd y_prev;
  std::vector<double> cost_history;
  std::vector<std::size_t> unconverged_sigma;
};

/// Momentum gradient descent on the KL cost, starting from a seeded
/// N(0, 1e-4^2) layout. Throws Error naming the iteration when the cost turns
/// non-finite.
SneState embed(const Eigen::MatrixXd& x, const SneConfig& config);

// point_id,label,y0,y1[,...]
void write_embedding_csv(std::ostream& out, const Eigen::MatrixXd& y, std::span<const int> labels);

}  // namespace frictionml
