#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "frictionml/error.hpp"

namespace frictionml {

struct KernelSpec {
  double sigma = 1.0;  // RBF width, > 0
};

// exp(-|x - x'|^2 / (2 sigma^2))
double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& xp, double sigma);

struct SvmModel {
  Eigen::VectorXd alphas;           // one per stored support vector
  Eigen::MatrixXd support_vectors;  // rows
  std::vector<int> support_labels;  // -1 / +1
  double b = 0.0;
  double c = 1.0;
  KernelSpec kernel;
  std::size_t sweeps = 0;
};

struct SmoOptions {
  double c = 1.0;
  KernelSpec kernel;
  double tol = 1e-3;
  std::size_t max_passes = 10;
  std::size_t max_sweeps = 1000;  // iteration cap = max_sweeps * n
};

// Carries the best iterate when SMO stalls.
class SvmNonConvergence : public Error {
 public:
  SvmNonConvergence(const std::string& what, SvmModel best) : Error(what), best_(std::move(best)) {}
  const SvmModel& best() const noexcept { return best_; }

 private:
  SvmModel best_;
};

/// Soft-margin RBF SVM trained by sequential minimal optimisation on the
/// dual. Each step takes the most violating i and the partner j maximising
/// |E_i - E_j| among multipliers free to move the other way, falling back to
/// other partners when that pair cannot move. Stops once the largest KKT
/// violation is below `tol`; 10 * max_passes failed attempts in a row raise
/// SvmNonConvergence.
SvmModel fit_smo(const Eigen::MatrixXd& x, const std::vector<int>& y, const SmoOptions& options);

double decision_value(const SvmModel& model, const Eigen::VectorXd& x);
// +1 when decision_value >= 0, else -1.
int predict(const SvmModel& model, const Eigen::VectorXd& x);

// sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij over the stored vectors.
double dual_objective(const SvmModel& model);

double median_pairwise_distance(const Eigen::MatrixXd& x);

// "b,C,sigma" header and values, then "alpha,y,x0,..." rows.
void write_svm_csv(std::ostream& out, const SvmModel& model);

}  // namespace frictionml
