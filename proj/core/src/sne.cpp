#include "frictionml/sne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "frictionml/csv.hpp"
#include "frictionml/error.hpp"
#include "frictionml/rng.hpp"

namespace frictionml {

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const auto n = x.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
  return d;
}

// Fills row i of p for precision beta = 1/(2 sigma^2); returns entropy in bits.
double fill_row(const Eigen::MatrixXd& d2, Eigen::Index i, double beta, Eigen::MatrixXd& p) {
  const auto n = d2.rows();
  double dmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, d2(i, j));
  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    // shift by the nearest distance; cancels in the normalisation
    p(i, j) = j == i ? 0.0 : std::exp(-(d2(i, j) - dmin) * beta);
    sum += p(i, j);
  }
  double h = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) continue;
    p(i, j) /= sum;
    if (p(i, j) > 0.0) h -= p(i, j) * std::log2(p(i, j));
  }
  return h;
}

}  // namespace

ConditionalP conditional_p(const Eigen::MatrixXd& x, double perplexity, double sigma_tol) {
  const auto n = x.rows();
  if (n < 2) throw ArgumentError("conditional_p: need at least 2 points");
  if (!(perplexity > 0.0)) throw ArgumentError("conditional_p: perplexity must be > 0");
  const Eigen::MatrixXd d2 = squared_distances(x);
  ConditionalP out;
  out.p = Eigen::MatrixXd::Zero(n, n);
  out.sigma.assign(static_cast<std::size_t>(n), 0.0);
  const double target = std::log2(perplexity);

  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    bool ok = false;
    for (int it = 0; it < 100; ++it) {
      const double h = fill_row(d2, i, beta, out.p);
      if (std::abs(std::exp2(h) - perplexity) < sigma_tol) {
        ok = true;
        break;
      }
      if (h > target) {  // too flat: sharpen
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    if (!ok) {
      out.unconverged.push_back(static_cast<std::size_t>(i));
      if (std::isfinite(hi)) beta = 0.5 * (lo + hi);
      fill_row(d2, i, beta, out.p);
    }
    out.sigma[static_cast<std::size_t>(i)] = std::sqrt(1.0 / (2.0 * beta));
  }
  return out;
}

Eigen::MatrixXd conditional_q(const Eigen::MatrixXd& y) {
  const auto n = y.rows();
  if (n < 2) throw ArgumentError("conditional_q: need at least 2 points");
  const Eigen::MatrixXd d2 = squared_distances(y);
  Eigen::MatrixXd q(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d2(i, j));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      q(i, j) = j == i ? 0.0 : std::exp(-(d2(i, j) - dmin));
      sum += q(i, j);
    }
    q.row(i) /= sum;
  }
  return q;
}

double kl_cost(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw ContractError("kl_cost: shape mismatch");
  double c = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double pij = p(i, j);
      if (pij <= 0.0) continue;
      if (q(i, j) <= 0.0) return std::numeric_limits<double>::infinity();
      c += pij * std::log(pij / q(i, j));
    }
  }
  return c;
}

Eigen::MatrixXd sne_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const Eigen::MatrixXd& y) {
  const auto n = y.rows();
  if (p.rows() != n || p.cols() != n || q.rows() != n || q.cols() != n)
    throw ContractError("sne_gradient: shape mismatch");
  const Eigen::MatrixXd diff = p - q;
  const Eigen::MatrixXd m = diff + diff.transpose();  // m(i,j) = p_{j|i}-q_{j|i}+p_{i|j}-q_{i|j}
  // 2 * sum_j m_ij (y_i - y_j) = 2 * (rowsum(m)_i * y_i - (m y)_i)
  const Eigen::VectorXd rs = m.rowwise().sum();
  return 2.0 * (rs.asDiagonal() * y - m * y);
}

SneState embed(const Eigen::MatrixXd& x_in, const SneConfig& config) {
  const auto n = x_in.rows();
  if (n < 3) throw InsufficientDataError("embed: need at least 3 points");
  if (config.out_dims < 1) throw ArgumentError("embed: out_dims must be >= 1");
  if (!(config.eta > 0.0)) throw ArgumentError("embed: eta must be > 0");
  if (!(config.perplexity > 1.0)) throw ArgumentError("embed: perplexity must be > 1");

  Rng rng(derive_seed(config.seed, {0x53e1ULL}));
  Eigen::MatrixXd x = x_in;
  // nudge exact duplicates apart
  const Eigen::MatrixXd d2 = squared_distances(x);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (d2(i, j) == 0.0) {
        for (Eigen::Index k = 0; k < x.cols(); ++k) x(j, k) += 1e-8 * standard_normal(rng);
      }

  const double perplexity = std::min(config.perplexity, std::max(1.0 + 1e-9, static_cast<double>(n) / 3.0 - 1e-9));
  auto cp = conditional_p(x, perplexity, config.sigma_tol);

  SneState s;
  s.p = std::move(cp.p);
  s.unconverged_sigma = std::move(cp.unconverged);
  const auto dims = static_cast<Eigen::Index>(config.out_dims);
  s.y.resize(n, dims);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < dims; ++k) s.y(i, k) = 1e-4 * standard_normal(rng);
  s.y_prev = s.y;

  for (std::size_t it = 0; it < config.n_iter; ++it) {
    const Eigen::MatrixXd q = conditional_q(s.y);
    const double c = kl_cost(s.p, q);
    if (!std::isfinite(c)) throw Error("embed: non-finite cost at iteration " + std::to_string(it));
    s.cost_history.push_back(c);
    const Eigen::MatrixXd g = sne_gradient(s.p, q, s.y);
    Eigen::MatrixXd next = s.y - config.eta * g + config.alpha(it) * (s.y - s.y_prev);
    s.y_prev = std::move(s.y);
    s.y = std::move(next);
  }
  return s;
}

void write_embedding_csv(std::ostream& out, const Eigen::MatrixXd& y, std::span<const int> labels) {
  if (static_cast<std::size_t>(y.rows()) != labels.size())
    throw ContractError("write_embedding_csv: label count mismatch");
  out << "point_id,label";
  for (Eigen::Index k = 0; k < y.cols(); ++k) out << ",y" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    out << i << ',' << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < y.cols(); ++k) out << ',' << csv::format_double(y(i, k));
    out << '\n';
  }
}

}  // namespace frictionml
