#include "frictionml/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <vector>

#include "frictionml/csv.hpp"
#include "frictionml/error.hpp"

namespace frictionml {

Eigen::MatrixXd covariance(const Eigen::MatrixXd& data, bool centered) {
  const auto n = data.rows();
  if (n < 2) throw ArgumentError("covariance: need at least 2 rows, got " + std::to_string(n));
  Eigen::MatrixXd c;
  if (centered) {
    c = data.transpose() * data / static_cast<double>(n);
  } else {
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Eigen::MatrixXd xc = data.rowwise() - mean;
    c = xc.transpose() * xc / static_cast<double>(n);
  }
  // exact symmetry
  const Eigen::MatrixXd sym = 0.5 * (c + c.transpose());
  return sym;
}

namespace {

double max_off_diagonal(const Eigen::MatrixXd& a) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j)));
  return m;
}

}  // namespace

SymmetricEigen eig_symmetric(const Eigen::MatrixXd& c) {
  if (c.rows() != c.cols()) throw ContractError("eig_symmetric: matrix is not square");
  const auto n = c.rows();
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (std::abs(c(i, j) - c(j, i)) > 1e-10 * scale)
        throw ContractError("eig_symmetric: matrix is not symmetric");

  Eigen::MatrixXd a = 0.5 * (c + c.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double stop = 1e-12 * scale;

  int sweep = 0;
  for (; sweep < 100 && max_off_diagonal(a) >= stop; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle from the classic stable formulation.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;

        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = cs * vkp - sn * vkq;
          v(k, q) = sn * vkp + cs * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  SymmetricEigen out;
  out.sweeps = sweep;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    Eigen::VectorXd col = v.col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (std::abs(col(i)) > std::abs(col(arg))) arg = i;
    if (col(arg) < 0.0) col = -col;
    out.vectors.col(k) = col;
  }
  return out;
}

VarianceShare total_variance(const Eigen::VectorXd& eigenvalues, std::size_t n) {
  const auto big_n = static_cast<std::size_t>(eigenvalues.size());
  if (n < 1 || n > big_n)
    throw ArgumentError("total_variance: n must lie in [1, " + std::to_string(big_n) + "]");
  const double inv_n = 1.0 / static_cast<double>(big_n);
  const double head = eigenvalues.head(static_cast<Eigen::Index>(n)).sum();
  const double all = eigenvalues.sum();
  VarianceShare share;
  share.t_n = inv_n * head;
  if (n == big_n) {
    share.fraction = 1.0;
  } else if (all > 0.0) {
    share.fraction = head / all;
  } else {
    // degenerate (all-zero) spectrum behaves like an equal spectrum
    share.fraction = static_cast<double>(n) * inv_n;
  }
  return share;
}

PcaModel fit_pca(const Eigen::MatrixXd& data, const PcaPolicy& policy) {
  if (data.rows() < 2) throw ArgumentError("fit_pca: need at least 2 rows");
  if (const auto* vf = std::get_if<VarianceFraction>(&policy)) {
    if (!(vf->fraction > 0.0 && vf->fraction <= 1.0))
      throw ArgumentError("fit_pca: variance_fraction must lie in (0, 1]");
  }
  PcaModel model;
  model.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd c = covariance(data, false);
  const auto eig = eig_symmetric(c);
  model.eigenvalues = eig.values.unaryExpr([](double x) { return x < 0.0 ? 0.0 : x; });
  model.eigenvectors = eig.vectors;

  const auto big_n = static_cast<std::size_t>(data.cols());
  if (const auto* kc = std::get_if<KeepCount>(&policy)) {
    if (kc->n_keep == 0) throw ArgumentError("fit_pca: n_keep must be >= 1");
    model.n_keep = std::min(kc->n_keep, big_n);
  } else {
    const double target = std::get<VarianceFraction>(policy).fraction;
    model.n_keep = big_n;
    for (std::size_t n = 1; n <= big_n; ++n) {
      // small slack so that "all variance in one direction" is not lost to rounding
      if (total_variance(model.eigenvalues, n).fraction >= target - 1e-12) {
        model.n_keep = n;
        break;
      }
    }
  }
  return model;
}

Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.mean.size())
    throw ContractError("project: expected dimension " + std::to_string(model.mean.size()) +
                        ", got " + std::to_string(x.size()));
  const auto k = static_cast<Eigen::Index>(model.n_keep);
  return model.eigenvectors.leftCols(k).transpose() * (x - model.mean);
}

Eigen::MatrixXd project_rows(const PcaModel& model, const Eigen::MatrixXd& data) {
  if (data.cols() != model.mean.size()) throw ContractError("project_rows: dimension mismatch");
  const auto k = static_cast<Eigen::Index>(model.n_keep);
  return (data.rowwise() - model.mean.transpose()) * model.eigenvectors.leftCols(k);
}

void write_pca_csv(std::ostream& out, const PcaModel& model) {
  auto row = [&](const char* tag, const auto& vec) {
    out << tag;
    for (Eigen::Index i = 0; i < vec.size(); ++i) out << ',' << csv::format_double(vec(i));
    out << '\n';
  };
  out << "n_keep," << model.n_keep << '\n';
  row("mean", model.mean);
  row("eigenvalues", model.eigenvalues);
  for (Eigen::Index r = 0; r < model.eigenvectors.rows(); ++r) {
    const Eigen::VectorXd v = model.eigenvectors.row(r).transpose();
    row("k", v);
  }
}

}  // namespace frictionml
