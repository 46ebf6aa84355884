#pragma once

#include <cstddef>
#include <iosfwd>
#include <variant>

#include <Eigen/Dense>

namespace frictionml {

// Population covariance (divisor n) of the rows of `data`. When `centered` is
// true the rows are assumed to be mean-free already.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& data, bool centered = false);

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the largest off-diagonal magnitude drops
/// below 1e-12 (relative to the matrix scale when that exceeds 1) or 100
/// sweeps have run. Each eigenvector is signed so that its largest-magnitude
/// component is positive. Throws ContractError for asymmetric input.
SymmetricEigen eig_symmetric(const Eigen::MatrixXd& c);

struct VarianceShare {
  double t_n = 0.0;       // (1/N) * sum of the first n eigenvalues
  double fraction = 0.0;  // t_n / t_N
};

VarianceShare total_variance(const Eigen::VectorXd& eigenvalues, std::size_t n);

struct KeepCount {
  std::size_t n_keep = 14;
};
struct VarianceFraction {
  double fraction = 0.95;
};
using PcaPolicy = std::variant<KeepCount, VarianceFraction>;

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::VectorXd eigenvalues;   // descending, clipped at 0
  Eigen::MatrixXd eigenvectors;  // orthonormal columns
  std::size_t n_keep = 0;

  std::size_t input_dim() const { return static_cast<std::size_t>(mean.size()); }
};

// A KeepCount larger than the data dimension is clamped to it.
PcaModel fit_pca(const Eigen::MatrixXd& data, const PcaPolicy& policy);

Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd project_rows(const PcaModel& model, const Eigen::MatrixXd& data);

// mean row, eigenvalue row, then one row per eigenvector matrix row.
void write_pca_csv(std::ostream& out, const PcaModel& model);

}  // namespace frictionml
