#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace frictionml {

struct LogRegModel {
  Eigen::VectorXd beta;  // beta[0] is the intercept
  bool converged = false;
  std::size_t n_iter = 0;
  double final_deviance = 0.0;
  double ridge = 0.0;
  bool separation_warning = false;
  std::vector<double> deviance_trace;  // deviance after each accepted step, starting at beta = 0

  std::size_t n_features() const { return beta.size() > 0 ? static_cast<std::size_t>(beta.size() - 1) : 0; }
};

struct IrlsOptions {
  std::size_t max_iter = 100;
  double tol = 1e-8;
  double ridge = 1e-8;  // added to the Hessian only
};

// Numerically stable (1 + exp(-(b0 + b.x)))^-1.
double predict_proba(const LogRegModel& model, const Eigen::VectorXd& x);
double linear_predictor(const LogRegModel& model, const Eigen::VectorXd& x);

// p / (1 - p); +inf at p == 1, 0 at p == 0.
double odds(double p);
double logit(double p);

/// Newton/IRLS on the binomial log-likelihood with step-halving (up to 20
/// halvings until the deviance stops increasing). y holds 0/1 labels.
/// Throws DegenerateLabelsError when y has one class.
LogRegModel fit_irls(const Eigen::MatrixXd& x, const std::vector<int>& y, const IrlsOptions& options = {});

double binomial_deviance(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::VectorXd& beta);

// header row naming features (intercept first), then a row of coefficients
void write_logreg_csv(std::ostream& out, const LogRegModel& model,
                      const std::vector<std::string>& feature_names = {});

}  // namespace frictionml
