#include "frictionml/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "frictionml/csv.hpp"

namespace frictionml {

namespace {

constexpr double kAlphaEps = 1e-8;
constexpr double kSnap = 1e-12;

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& x, double sigma) {
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * x * x.transpose()).colwise() + norms;
  d2.rowwise() += norms.transpose();
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Eigen::MatrixXd k = (-(d2.cwiseMax(0.0)) * inv).array().exp().matrix();
  k.diagonal().setOnes();
  return 0.5 * (k + k.transpose());
}

class SmoSolver {
 public:
  SmoSolver(const Eigen::MatrixXd& x, const std::vector<int>& y, const SmoOptions& opt)
      : x_(x), y_(y), opt_(opt), n_(x.rows()) {
    k_ = rbf_gram(x, opt.kernel.sigma);
    alpha_ = Eigen::VectorXd::Zero(n_);
    f_ = Eigen::VectorXd::Zero(n_);
  }

  SvmModel solve() {
    // Each iteration takes the maximal violating pair: i with the largest
    // y*(y - f) among multipliers that may move up, j with the largest
    // |E_i - E_j| among those that may move down.
    std::size_t iters = 0;
    std::size_t stalled = 0;
    const std::size_t max_iters = opt_.max_sweeps * static_cast<std::size_t>(std::max<Eigen::Index>(n_, 1));
    while (true) {
      Eigen::Index i = -1, j = -1;
      double m_up = -std::numeric_limits<double>::infinity();
      double m_low = std::numeric_limits<double>::infinity();
      for (Eigen::Index t = 0; t < n_; ++t) {
        const double v = yl(t) - f_(t);  // -y_t * gradient_t
        if (in_up(t) && v > m_up) {
          m_up = v;
          i = t;
        }
        if (in_low(t) && v < m_low) {
          m_low = v;
          j = t;
        }
      }
      if (i < 0 || j < 0 || m_up - m_low < opt_.tol) break;
      if (step(i, j)) {
        stalled = 0;
      } else if (!fallback(i, m_up)) {
        if (++stalled >= 10 * opt_.max_passes)
          throw SvmNonConvergence("fit_smo: no progress after " + std::to_string(stalled) + " attempts",
                                  build(sweeps_of(iters)));
      }
      if (++iters >= max_iters) throw SvmNonConvergence("fit_smo: iteration limit reached", build(sweeps_of(iters)));
      if (iters % static_cast<std::size_t>(n_) == 0) refresh();
    }
    refresh();
    return build(sweeps_of(iters));
  }

 private:
  bool in_up(Eigen::Index t) const { return yl(t) > 0 ? alpha_(t) < opt_.c : alpha_(t) > 0.0; }
  bool in_low(Eigen::Index t) const { return yl(t) > 0 ? alpha_(t) > 0.0 : alpha_(t) < opt_.c; }
  std::size_t sweeps_of(std::size_t iters) const { return iters / static_cast<std::size_t>(std::max<Eigen::Index>(n_, 1)) + 1; }

  // When the best pair cannot move (duplicate points, degenerate box) try the
  // other violating partners of i in order of decreasing gap.
  bool fallback(Eigen::Index i, double m_up) {
    std::vector<std::pair<double, Eigen::Index>> cand;
    for (Eigen::Index t = 0; t < n_; ++t) {
      if (t == i || !in_low(t)) continue;
      const double v = yl(t) - f_(t);
      if (m_up - v >= opt_.tol) cand.emplace_back(m_up - v, t);
    }
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    for (const auto& [gap, t] : cand)
      if (step(i, t)) return true;
    return false;
  }

  // rounding residue at a bound would leave a multiplier that can never move
  double snap(double a) const {
    const double eps = kSnap * opt_.c;
    if (a < eps) return 0.0;
    if (a > opt_.c - eps) return opt_.c;
    return a;
  }

  double error(Eigen::Index i) const { return f_(i) + b_ - y_[static_cast<std::size_t>(i)]; }
  int yl(Eigen::Index i) const { return y_[static_cast<std::size_t>(i)]; }

  bool step(Eigen::Index i, Eigen::Index j) {
    const double c = opt_.c;
    const double ai = alpha_(i), aj = alpha_(j);
    const int yi = yl(i), yj = yl(j);
    const double ei = error(i), ej = error(j);
    const int s = yi * yj;
    double lo, hi;
    if (yi != yj) {
      lo = std::max(0.0, aj - ai);
      hi = std::min(c, c + aj - ai);
    } else {
      lo = std::max(0.0, ai + aj - c);
      hi = std::min(c, ai + aj);
    }
    if (hi - lo < 1e-14) return false;

    const double kii = k_(i, i), kjj = k_(j, j), kij = k_(i, j);
    const double eta = kii + kjj - 2.0 * kij;
    double aj_new;
    if (eta > 1e-12) {
      aj_new = std::clamp(aj + yj * (ei - ej) / eta, lo, hi);
    } else {
      // objective is linear along the constraint line: take the better end
      auto obj_at = [&](double a2) {
        const double a1 = ai + s * (aj - a2);
        const double d1 = a1 - ai, d2 = a2 - aj;
        return d1 + d2 - yi * d1 * (f_(i)) - yj * d2 * (f_(j)) -
               0.5 * (d1 * d1 * kii + d2 * d2 * kjj + 2.0 * s * d1 * d2 * kij);
      };
      const double ol = obj_at(lo), oh = obj_at(hi);
      if (ol > oh + 1e-12) aj_new = lo;
      else if (oh > ol + 1e-12) aj_new = hi;
      else return false;
    }
    aj_new = snap(aj_new);
    if (std::abs(aj_new - aj) < 1e-12 * (aj_new + aj + 1e-12)) return false;

    // follows from the constraint line; only rounding can push it out of the box
    const double ai_new = snap(std::clamp(ai + s * (aj - aj_new), 0.0, c));

    const double di = yi * (ai_new - ai);
    const double dj = yj * (aj_new - aj);
    const double b1 = b_ - ei - di * kii - dj * kij;
    const double b2 = b_ - ej - di * kij - dj * kjj;
    double b_new;
    if (ai_new > 0.0 && ai_new < c) b_new = b1;
    else if (aj_new > 0.0 && aj_new < c) b_new = b2;
    else b_new = 0.5 * (b1 + b2);

    f_ += di * k_.col(i) + dj * k_.col(j);
    b_ = b_new;
    alpha_(i) = ai_new;
    alpha_(j) = aj_new;
    return true;
  }

  // recompute the kernel expansion from scratch to stop drift
  void refresh() {
    Eigen::VectorXd ay(n_);
    for (Eigen::Index i = 0; i < n_; ++i) ay(i) = alpha_(i) * yl(i);
    f_ = k_ * ay;
  }

  double objective() const {
    Eigen::VectorXd ay(n_);
    for (Eigen::Index i = 0; i < n_; ++i) ay(i) = alpha_(i) * yl(i);
    return alpha_.sum() - 0.5 * ay.dot(k_ * ay);
  }

  double final_bias() const {
    double sum = 0.0;
    std::size_t count = 0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double target = yl(i) - f_(i);
      if (alpha_(i) > kAlphaEps && alpha_(i) < opt_.c - kAlphaEps) {
        sum += target;
        ++count;
      } else {
        // bounded multipliers only bound b from one side
        const bool at_zero = alpha_(i) <= kAlphaEps;
        if ((yl(i) > 0) == at_zero) lower = std::max(lower, target);
        else upper = std::min(upper, target);
      }
    }
    if (count) return sum / static_cast<double>(count);
    if (std::isfinite(lower) && std::isfinite(upper)) return 0.5 * (lower + upper);
    if (std::isfinite(lower)) return lower;
    if (std::isfinite(upper)) return upper;
    return b_;
  }

  SvmModel build(std::size_t sweeps) const {
    SvmModel m;
    m.c = opt_.c;
    m.kernel = opt_.kernel;
    m.sweeps = sweeps;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n_; ++i)
      if (alpha_(i) > kAlphaEps) keep.push_back(i);
    m.alphas.resize(static_cast<Eigen::Index>(keep.size()));
    m.support_vectors.resize(static_cast<Eigen::Index>(keep.size()), x_.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      const auto idx = keep[r];
      m.alphas(static_cast<Eigen::Index>(r)) = alpha_(idx);
      m.support_vectors.row(static_cast<Eigen::Index>(r)) = x_.row(idx);
      m.support_labels.push_back(yl(idx));
    }
    m.b = final_bias();
    return m;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<int>& y_;
  SmoOptions opt_;
  Eigen::Index n_;
  Eigen::MatrixXd k_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd f_;  // sum_j alpha_j y_j K_ij, without b
  double b_ = 0.0;
};

}  // namespace

double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& xp, double sigma) {
  if (x.size() != xp.size()) throw ContractError("rbf_kernel: dimension mismatch");
  if (!(sigma > 0.0)) throw ArgumentError("rbf_kernel: sigma must be > 0");
  return std::exp(-(x - xp).squaredNorm() / (2.0 * sigma * sigma));
}

SvmModel fit_smo(const Eigen::MatrixXd& x, const std::vector<int>& y, const SmoOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw ContractError("fit_smo: label count mismatch");
  if (!(options.c > 0.0)) throw ArgumentError("fit_smo: C must be > 0");
  if (!(options.kernel.sigma > 0.0)) throw ArgumentError("fit_smo: sigma must be > 0");
  if (options.max_passes == 0) throw ArgumentError("fit_smo: max_passes must be >= 1");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v != 1 && v != -1) throw ArgumentError("fit_smo: labels must be -1/+1");
    (v > 0 ? pos : neg) = true;
  }
  if (!(pos && neg)) throw DegenerateLabelsError("fit_smo: labels contain a single class");
  SmoSolver solver(x, y, options);
  return solver.solve();
}

double decision_value(const SvmModel& model, const Eigen::VectorXd& x) {
  if (model.support_vectors.rows() > 0 && x.size() != model.support_vectors.cols())
    throw ContractError("decision_value: dimension mismatch");
  double s = model.b;
  const double inv = 1.0 / (2.0 * model.kernel.sigma * model.kernel.sigma);
  for (Eigen::Index i = 0; i < model.alphas.size(); ++i) {
    const double d2 = (model.support_vectors.row(i).transpose() - x).squaredNorm();
    s += model.alphas(i) * model.support_labels[static_cast<std::size_t>(i)] * std::exp(-d2 * inv);
  }
  return s;
}

int predict(const SvmModel& model, const Eigen::VectorXd& x) { return decision_value(model, x) >= 0.0 ? 1 : -1; }

double dual_objective(const SvmModel& model) {
  const auto k = rbf_gram(model.support_vectors, model.kernel.sigma);
  Eigen::VectorXd ay(model.alphas.size());
  for (Eigen::Index i = 0; i < ay.size(); ++i) ay(i) = model.alphas(i) * model.support_labels[static_cast<std::size_t>(i)];
  return model.alphas.sum() - 0.5 * ay.dot(k * ay);
}

double median_pairwise_distance(const Eigen::MatrixXd& x) {
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(x.rows() * (x.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) d.push_back((x.row(i) - x.row(j)).norm());
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  return med > 0.0 ? med : 1.0;
}

void write_svm_csv(std::ostream& out, const SvmModel& model) {
  out << "b,C,sigma\n"
      << csv::format_double(model.b) << ',' << csv::format_double(model.c) << ','
      << csv::format_double(model.kernel.sigma) << '\n';
  out << "alpha,y";
  for (Eigen::Index k = 0; k < model.support_vectors.cols(); ++k) out << ",x" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < model.alphas.size(); ++i) {
    out << csv::format_double(model.alphas(i)) << ',' << model.support_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < model.support_vectors.cols(); ++k)
      out << ',' << csv::format_double(model.support_vectors(i, k));
    out << '\n';
  }
}

}  // namespace frictionml
