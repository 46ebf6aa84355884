#include "frictionml/logreg.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "frictionml/csv.hpp"
#include "frictionml/error.hpp"

namespace frictionml {

namespace {

double stable_sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow
double log1pexp(double x) { return x > 35.0 ? x : (x < -35.0 ? std::exp(x) : std::log1p(std::exp(x))); }

Eigen::VectorXd linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  return (x * beta.tail(beta.size() - 1)).array() + beta(0);
}

}  // namespace

double linear_predictor(const LogRegModel& model, const Eigen::VectorXd& x) {
  if (x.size() + 1 != model.beta.size())
    throw ContractError("logreg: expected " + std::to_string(model.beta.size() - 1) + " features, got " +
                        std::to_string(x.size()));
  return model.beta(0) + model.beta.tail(x.size()).dot(x);
}

double predict_proba(const LogRegModel& model, const Eigen::VectorXd& x) {
  return stable_sigmoid(linear_predictor(model, x));
}

double odds(double p) {
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return p / (1.0 - p);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double binomial_deviance(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = linear(x, beta);
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // -log-likelihood of one Bernoulli observation under the logit link
    dev += y[static_cast<std::size_t>(i)] ? log1pexp(-eta(i)) : log1pexp(eta(i));
  }
  return 2.0 * dev;
}

LogRegModel fit_irls(const Eigen::MatrixXd& x, const std::vector<int>& y, const IrlsOptions& options) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (static_cast<std::size_t>(n) != y.size()) throw ContractError("fit_irls: label count mismatch");
  if (n <= p) throw ArgumentError("fit_irls: need more samples than features");
  bool has0 = false, has1 = false;
  for (int v : y) {
    if (v != 0 && v != 1) throw ArgumentError("fit_irls: labels must be 0/1");
    (v ? has1 : has0) = true;
  }
  if (!(has0 && has1)) throw DegenerateLabelsError("fit_irls: labels contain a single class");

  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = x;
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];

  LogRegModel model;
  model.ridge = options.ridge;
  model.beta = Eigen::VectorXd::Zero(p + 1);
  double dev = binomial_deviance(x, y, model.beta);
  model.deviance_trace.push_back(dev);

  for (std::size_t it = 0; it < options.max_iter; ++it) {
    const Eigen::VectorXd eta = linear(x, model.beta);
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = stable_sigmoid(eta(i));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    const Eigen::VectorXd score = design.transpose() * (yv - mu);
    Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
    hess.diagonal().array() += options.ridge;
    const Eigen::VectorXd step = hess.ldlt().solve(score);
    model.n_iter = it + 1;
    if (!step.allFinite()) {
      model.separation_warning = true;
      break;
    }

    double scale = 1.0;
    Eigen::VectorXd candidate = model.beta + step;
    double cand_dev = binomial_deviance(x, y, candidate);
    for (int h = 0; h < 20 && !(std::isfinite(cand_dev) && cand_dev <= dev); ++h) {
      scale *= 0.5;
      candidate = model.beta + scale * step;
      cand_dev = binomial_deviance(x, y, candidate);
    }
    if (!std::isfinite(cand_dev) || !candidate.allFinite()) {
      model.separation_warning = true;
      break;
    }
    const double change = (scale * step).cwiseAbs().maxCoeff();
    if (cand_dev <= dev) {
      model.beta = candidate;
      dev = cand_dev;
      model.deviance_trace.push_back(dev);
    }
    if (change < options.tol) {
      model.converged = true;
      break;
    }
    if (cand_dev > dev) break;  // no descent even after halving: stalled at the optimum
  }
  model.final_deviance = dev;
  if (model.beta.cwiseAbs().maxCoeff() > 30.0 && !model.converged) model.separation_warning = true;
  // only complete separation drives the deviance to zero; the weights vanish
  // first, so the loop can look converged
  if (dev < 1e-6) model.separation_warning = true;
  return model;
}

void write_logreg_csv(std::ostream& out, const LogRegModel& model, const std::vector<std::string>& feature_names) {
  out << "intercept";
  for (std::size_t j = 0; j < model.n_features(); ++j)
    out << ',' << (j < feature_names.size() ? feature_names[j] : "x" + std::to_string(j));
  out << '\n';
  for (Eigen::Index j = 0; j < model.beta.size(); ++j) out << (j ? "," : "") << csv::format_double(model.beta(j));
  out << '\n';
}

}  // namespace frictionml
