#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "frictionml/dataset.hpp"
#include "frictionml/eval.hpp"
#include "frictionml/logreg.hpp"
#include "frictionml/mlp.hpp"
#include "frictionml/pca.hpp"
#include "frictionml/pipeline.hpp"
#include "frictionml/rng.hpp"
#include "frictionml/sne.hpp"
#include "frictionml/structuring.hpp"
#include "frictionml/svm.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace frictionml;

namespace {

// First failure wins; later ones are counted only.
struct Outcome {
  bool ok = true;
  std::string why;
  std::size_t extra = 0;

  void fail(const std::string& what) {
    if (ok) {
      ok = false;
      why = what;
    } else {
      ++extra;
    }
  }
  void expect(bool cond, const std::string& what) {
    if (!cond) fail(what);
  }
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

fs::path workdir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "frictionml_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(FRICTIONML_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

Eigen::VectorXd flatten(const Weights& w) {
  Eigen::Index n = 0;
  for (const auto& m : w) n += m.size();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (const auto& m : w) {
    out.segment(k, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    k += m.size();
  }
  return out;
}

void unflatten(const Eigen::VectorXd& flat, Weights& w) {
  Eigen::Index k = 0;
  for (auto& m : w) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = flat.segment(k, m.size());
    k += m.size();
  }
}

// ---------------------------------------------------------------------------

Outcome check_mlp_gradient() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0.0, 0.8);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::size_t checked = 0;
  for (auto hidden : {Activation::sigmoid(), Activation::tanh(), Activation::relu()}) {
    for (auto kind : {CostKind::kSse, CostKind::kBce, CostKind::kSoftmaxCeLogits}) {
      for (int trial = 0; trial < 20; ++trial) {
        MlpTopology t;
        // at most 4 layers counting input and output, at most 8 units each
        t.layer_sizes.push_back(1 + rng() % 8);
        const std::size_t hidden_layers = 1 + rng() % 2;
        for (std::size_t h = 0; h < hidden_layers; ++h) t.layer_sizes.push_back(1 + rng() % 8);
        const std::size_t n_out = kind == CostKind::kSoftmaxCeLogits ? 2 + rng() % 7 : 1 + rng() % 8;
        t.layer_sizes.push_back(n_out);
        t.hidden = hidden;
        if (kind == CostKind::kBce) t.output = Activation::sigmoid();
        else if (kind == CostKind::kSse && trial % 2) t.output = Activation::tanh();
        else t.output = Activation::linear();
        auto m = init_mlp(t);
        for (auto& w : m.weights)
          for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);

        Eigen::VectorXd x(static_cast<Eigen::Index>(t.layer_sizes[0]));
        for (auto& v : x) v = u(rng);
        Eigen::VectorXd target = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_out));
        if (kind == CostKind::kSoftmaxCeLogits) target(static_cast<Eigen::Index>(rng() % n_out)) = 1.0;
        else
          for (auto& v : target) v = kind == CostKind::kBce ? static_cast<double>(rng() % 2) : u(rng);

        const CostSpec cost{kind};
        const Eigen::VectorXd an = flatten(backprop(m, x, target, cost));
        auto loss = [&](const Eigen::VectorXd& flat) {
          MlpModel p = m;
          unflatten(flat, p.weights);
          return cost_value(cost, predict_output(p, x), target);
        };
        const Eigen::VectorXd fd = oracle::central_difference(loss, flatten(m.weights), 1e-6);
        const double rel = oracle::relative_error(an, fd);
        o.expect(rel < 1e-5, activation_name(hidden) + "/" + cost_name(kind) + " trial " + std::to_string(trial) +
                                 ": relative error " + num(rel));
        ++checked;
      }
    }
  }
  o.expect(checked == 180, "wrong number of nets");
  return o;
}

Outcome check_sne_gradient() {
  Outcome o;
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> perp(1.5, 4.5);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd x(6, 4), y(6, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = g(rng);
    const auto p = conditional_p(x, perp(rng)).p;
    const Eigen::MatrixXd q = conditional_q(y);
    for (Eigen::Index i = 0; i < 6; ++i) {
      o.expect(std::abs(p.row(i).sum() - 1.0) <= 1e-10, "P row sum off in trial " + std::to_string(trial));
      o.expect(std::abs(q.row(i).sum() - 1.0) <= 1e-10, "Q row sum off in trial " + std::to_string(trial));
    }
    const Eigen::MatrixXd an = sne_gradient(p, q, y);
    auto cost = [&](const Eigen::VectorXd& flat) {
      const Eigen::MatrixXd yy = Eigen::Map<const Eigen::MatrixXd>(flat.data(), 6, 2);
      return kl_cost(p, conditional_q(yy));
    };
    const Eigen::VectorXd at = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
    const Eigen::VectorXd fd = oracle::central_difference(cost, at, 1e-5);
    const double rel = oracle::relative_error(Eigen::Map<const Eigen::VectorXd>(an.data(), an.size()), fd);
    o.expect(rel < 1e-4, "trial " + std::to_string(trial) + ": relative error " + num(rel));
  }
  return o;
}

struct Problem {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Problem random_problem(std::mt19937_64& rng, int n, int dim) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Problem p{Eigen::MatrixXd(n, dim), std::vector<int>(static_cast<std::size_t>(n))};
  for (Eigen::Index i = 0; i < p.x.size(); ++i) p.x.data()[i] = u(rng);
  for (int i = 0; i < n; ++i) p.y[static_cast<std::size_t>(i)] = rng() % 2 ? 1 : -1;
  p.y[0] = 1;
  p.y[1] = -1;
  return p;
}

// Multipliers of every training row; rows not kept as support vectors are 0.
Eigen::VectorXd full_alpha(const SvmModel& m, const Eigen::MatrixXd& x) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(x.rows());
  for (Eigen::Index s = 0; s < m.support_vectors.rows(); ++s)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (x.row(i) == m.support_vectors.row(s)) a(i) = m.alphas(s);
  return a;
}

void check_svm_constraints(Outcome& o, const SvmModel& m, const Problem& p, const std::string& tag) {
  const auto a = full_alpha(m, p.x);
  double eq = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const int yi = p.y[static_cast<std::size_t>(i)];
    o.expect(a(i) >= 0.0 && a(i) <= m.c, tag + ": alpha outside [0, C]");
    eq += a(i) * yi;
    const double margin = yi * decision_value(m, p.x.row(i).transpose());
    if (a(i) <= 1e-8 * m.c) o.expect(margin >= 1.0 - 1e-3, tag + ": KKT violated at a zero multiplier");
    else if (a(i) >= m.c * (1.0 - 1e-8)) o.expect(margin <= 1.0 + 1e-3, tag + ": KKT violated at a bound multiplier");
    else o.expect(std::abs(margin - 1.0) <= 1e-3, tag + ": KKT violated at a free multiplier");
  }
  o.expect(std::abs(eq) < 1e-6, tag + ": |sum alpha y| = " + num(std::abs(eq)));
}

Outcome check_svm_oracle() {
  Outcome o;
  std::mt19937_64 rng(303);
  const double cs[] = {0.5, 1.0, 5.0};
  const double sigmas[] = {0.7, 1.0, 1.5};
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 6);
    const auto p = random_problem(rng, n, 2);
    SmoOptions opt;
    opt.c = cs[trial % 3];
    opt.kernel.sigma = sigmas[(trial / 3) % 3];
    opt.tol = 1e-8;
    const std::string tag = "problem " + std::to_string(trial);
    SvmModel m;
    try {
      m = fit_smo(p.x, p.y, opt);
    } catch (const SvmNonConvergence& e) {
      o.fail(tag + ": " + e.what());
      continue;
    }
    const auto qp = oracle::svm_dual_qp(p.x, p.y, opt.c, opt.kernel.sigma);
    o.expect(std::abs(dual_objective(m) - qp.objective) < 1e-4,
             tag + ": dual objective " + num(dual_objective(m)) + " vs oracle " + num(qp.objective));
    check_svm_constraints(o, m, p, tag);

    // 10 x 5 probe grid over the padded bounding box
    const Eigen::Vector2d lo = p.x.colwise().minCoeff().transpose().array() - 0.5;
    const Eigen::Vector2d hi = p.x.colwise().maxCoeff().transpose().array() + 0.5;
    int agree = 0;
    for (int a = 0; a < 10; ++a)
      for (int b = 0; b < 5; ++b) {
        const Eigen::Vector2d q(lo(0) + (hi(0) - lo(0)) * a / 9.0, lo(1) + (hi(1) - lo(1)) * b / 4.0);
        const int want = oracle::svm_decision(qp, p.x, p.y, opt.kernel.sigma, q) >= 0.0 ? 1 : -1;
        agree += predict(m, q) == want;
      }
    o.expect(agree == 50, tag + ": probe agreement " + std::to_string(agree) + "/50");
  }
  // larger problems at the default solver tolerance scale
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_problem(rng, 40, 3);
    SmoOptions opt;
    opt.c = cs[trial % 3];
    opt.kernel.sigma = median_pairwise_distance(p.x);
    opt.tol = 1e-4;
    try {
      check_svm_constraints(o, fit_smo(p.x, p.y, opt), p, "n=40 problem " + std::to_string(trial));
    } catch (const SvmNonConvergence& e) {
      o.fail(e.what());
    }
  }
  return o;
}

void check_eigen(Outcome& o, const Eigen::MatrixXd& c, const std::vector<double>& want) {
  const auto e = eig_symmetric(c);
  std::ostringstream tag;
  tag << "matrix [" << c.reshaped().transpose() << "]";
  for (std::size_t i = 0; i < want.size(); ++i)
    o.expect(std::abs(e.values(static_cast<Eigen::Index>(i)) - want[i]) < 1e-8, tag.str() + ": eigenvalue mismatch");
  const Eigen::MatrixXd back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  o.expect((back - c).cwiseAbs().maxCoeff() < 1e-8, tag.str() + ": reconstruction off");
  o.expect(std::abs(e.values.sum() - c.trace()) < 1e-8, tag.str() + ": trace off");
}

Outcome check_jacobi() {
  Outcome o;
  std::size_t count = 0;
  for (long long a = -2; a <= 2; ++a)
    for (long long b = -2; b <= 2; ++b)
      for (long long d = -2; d <= 2; ++d) {
        Eigen::Matrix2d c;
        c << a, b, b, d;
        check_eigen(o, c, oracle::eigenvalues_2x2(a, b, d));
        ++count;
      }
  std::array<long long, 6> v{};
  for (int code = 0; code < 15625; ++code) {
    int rest = code;
    for (auto& e : v) {
      e = rest % 5 - 2;
      rest /= 5;
    }
    const std::array<std::array<long long, 3>, 3> m{{{v[0], v[1], v[2]}, {v[1], v[3], v[4]}, {v[2], v[4], v[5]}}};
    Eigen::Matrix3d c;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c(i, j) = static_cast<double>(m[i][j]);
    check_eigen(o, c, oracle::eigenvalues_3x3(m));
    ++count;
  }
  o.expect(count == 125 + 15625, "wrong matrix count");
  return o;
}

Outcome check_optimizer_algebra() {
  Outcome o;
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> expo(-10.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Weights w{Eigen::MatrixXd(3, 4), Eigen::MatrixXd(2, 4)};
    for (auto& m : w)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    const double eta = std::pow(10.0, -1.0 - static_cast<double>(rng() % 4));

    Weights a = w, b = w;
    OptimizerSpec gd{OptimizerKind::kGd, eta};
    OptimizerSpec mom{OptimizerKind::kMomentum, eta, 0.0};
    auto sa = make_optimizer_state(gd, a);
    auto sb = make_optimizer_state(mom, b);
    for (std::size_t step = 0; step < 10; ++step) {
      Weights grad = w;
      for (auto& m : grad)
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
      optimizer_step(gd, sa, a, grad, step);
      optimizer_step(mom, sb, b, grad, step);
      for (std::size_t l = 0; l < a.size(); ++l)
        o.expect(a[l] == b[l], "momentum with alpha 0 differs from gd in trial " + std::to_string(trial));
    }

    OptimizerSpec adam;
    adam.eta = eta;
    Weights aw = w;
    Weights grad = w;
    // magnitudes from 1e-10 to 1e3 so epsilon matters at the small end
    for (auto& m : grad)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (rng() % 2 ? 1.0 : -1.0) * std::pow(10.0, expo(rng));
    auto st = make_optimizer_state(adam, aw);
    optimizer_step(adam, st, aw, grad, 0);
    for (std::size_t l = 0; l < aw.size(); ++l)
      for (Eigen::Index i = 0; i < aw[l].size(); ++i) {
        const double gi = std::abs(grad[l].data()[i]);
        const double step = std::abs(aw[l].data()[i] - w[l].data()[i]);
        o.expect(std::abs(step - eta * gi / (gi + adam.epsilon)) <= 1e-12,
                 "Adam first step off for |g| = " + num(gi));
      }
  }
  return o;
}

Outcome check_imputation() {
  Outcome o;
  auto check_mask = [&](const std::vector<bool>& mask) {
    for (std::size_t tau = 0; tau < mask.size(); ++tau) {
      if (!mask[tau]) continue;
      const auto w = inverse_distance_weights(mask, tau);
      double s = 0.0;
      for (double v : w) s += v;
      o.expect(std::abs(s - 1.0) <= 1e-12, "weights sum to " + num(s) + " at f_s " + std::to_string(mask.size()));
    }
  };
  for (std::size_t f = 1; f <= 10; ++f)
    for (std::uint32_t bits = 0; bits < (1u << f); ++bits) {
      std::vector<bool> mask(f);
      for (std::size_t k = 0; k < f; ++k) mask[k] = (bits >> k) & 1u;
      if (std::find(mask.begin(), mask.end(), false) != mask.end()) check_mask(mask);
    }
  std::mt19937_64 rng(606);
  for (std::size_t f = 11; f <= 20; ++f)
    for (int trial = 0; trial < 5000; ++trial) {
      std::vector<bool> mask(f);
      // vary the gap density as well as the pattern
      const auto density = 1 + rng() % 9;
      for (std::size_t k = 0; k < f; ++k) mask[k] = rng() % 10 < density;
      mask[rng() % f] = false;
      check_mask(mask);
    }

  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t f = 3 + rng() % 18;
    StructuredWindow w;
    w.values.resize(2, static_cast<Eigen::Index>(f));
    for (Eigen::Index i = 0; i < w.values.size(); ++i) w.values.data()[i] = u(rng);
    w.missing_mask.assign(f, false);
    for (std::size_t k = 1; k + 1 < f; ++k) w.missing_mask[k] = rng() % 3 == 0;
    const Eigen::MatrixXd observed = w.values;
    for (std::size_t k = 0; k < f; ++k)
      if (w.missing_mask[k]) w.values.col(static_cast<Eigen::Index>(k)).setConstant(kMissing);
    const auto filled = impute_neighbor(w);
    for (std::size_t k = 1; k + 1 < f; ++k) {
      if (!w.missing_mask[k] || w.missing_mask[k - 1] || w.missing_mask[k + 1]) continue;
      const auto kk = static_cast<Eigen::Index>(k);
      for (Eigen::Index r = 0; r < 2; ++r)
        o.expect(filled.values(r, kk) == (observed(r, kk - 1) + observed(r, kk + 1)) / 2.0,
                 "neighbour fill is not the exact mean");
    }
  }
  return o;
}

Outcome check_logistic_recovery() {
  Outcome o;
  Eigen::VectorXd beta(4);
  beta << -0.5, 1.0, -2.0, 0.5;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u;
    const int n = 5000;
    Eigen::MatrixXd x(n, 3);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) x(i, k) = g(rng);
      const double eta = beta(0) + x.row(i).dot(beta.tail(3));
      y[static_cast<std::size_t>(i)] = u(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
    }
    IrlsOptions opt;
    opt.ridge = 0.0;
    opt.tol = 1e-12;
    const auto m = fit_irls(x, y, opt);
    const double err = (m.beta - beta).cwiseAbs().maxCoeff();
    o.expect(err < 0.15, "seed " + std::to_string(seed) + ": coefficient error " + num(err));
    Eigen::VectorXd score = Eigen::VectorXd::Zero(4);
    for (int i = 0; i < n; ++i) {
      const double eta = m.beta(0) + x.row(i).dot(m.beta.tail(3));
      const double r = y[static_cast<std::size_t>(i)] - 1.0 / (1.0 + std::exp(-eta));
      score(0) += r;
      score.tail(3) += r * x.row(i).transpose();
    }
    o.expect(score.cwiseAbs().maxCoeff() < 1e-6, "seed " + std::to_string(seed) + ": score " +
                                                     num(score.cwiseAbs().maxCoeff()));
  }
  return o;
}

Outcome check_xor_capacity() {
  Outcome o;
  // z-scored inputs, as the classifier stack feeds the network
  MlpData d;
  d.x.resize(4, 2);
  d.x << -1, -1, -1, 1, 1, -1, 1, 1;
  d.targets.resize(4, 1);
  d.targets << 0, 1, 1, 0;
  int solved = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    MlpTopology t;
    t.layer_sizes = {2, 4, 1};
    t.hidden = Activation::relu();
    t.output = Activation::linear();
    t.seed = seed;
    OptimizerSpec adam;
    adam.eta = 0.01;
    FitOptions fo;
    fo.epochs = 2000;
    fo.patience = 0;
    fo.seed = seed;
    const auto m = fit(init_mlp(t), d, d, {CostKind::kSse}, adam, fo);
    solved += error_rate(m, d) == 0.0;
  }
  o.expect(solved >= 8, "solved " + std::to_string(solved) + "/10");
  return o;
}

bool numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

Outcome check_end_to_end(const fs::path& dir) {
  Outcome o;
  const int rc = run_cli("experiment --out '" + dir.string() + "'", dir.parent_path() / "experiment.log");
  o.expect(rc == 0, "experiment exited with " + std::to_string(rc));
  if (rc != 0) return o;

  RunConfig config;
  const auto segments = synthesize_segments(config);
  o.expect(segments.size() == 3, "expected 3 segments");
  std::vector<double> r;
  for (const auto& [name, v] : config.synth.feature_correlations) r.push_back(v);
  const auto& s = config.synth;
  const double mc =
      oracle::monte_carlo_bayes_error(r, s.squash_gain, s.slippery_fraction, s.label_threshold, s.noise_scale, 400000, 77);
  for (const auto& seg : segments) {
    o.expect(std::abs(seg.bayes_error - mc) <= 0.03,
             seg.segment_id + ": Bayes error " + num(seg.bayes_error) + " vs Monte-Carlo " + num(mc));
    o.expect(std::abs(seg.bayes_error - 0.15) <= 0.03, seg.segment_id + ": Bayes error " + num(seg.bayes_error));
  }

  const std::vector<std::string> classifiers{"LR", "SVM", "ANN"};
  const std::vector<std::string> horizons{"0", "30", "60", "90", "120"};
  for (const auto& seg : segments) {
    const auto rows = read_csv(dir / ("results_" + seg.segment_id + ".csv"));
    o.expect(rows.size() == 16, seg.segment_id + ": expected 15 result rows");
    if (rows.size() != 16) continue;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < 5; ++h) {
        const auto& row = rows[1 + c * 5 + h];
        const std::string tag = seg.segment_id + " " + classifiers[c] + "@" + horizons[h];
        o.expect(row.size() >= 5 && row[0] == classifiers[c] && row[1] == horizons[h], tag + ": row out of place");
        if (row.size() < 5) continue;
        o.expect(numeric(row[2]) && numeric(row[3]) && numeric(row[4]), tag + ": missing metric");
        if (h == 0 && numeric(row[2]))
          o.expect(std::stod(row[2]) <= 0.25, tag + ": CV error " + row[2]);
      }

    std::ifstream table(dir / ("table_" + seg.segment_id + ".txt"));
    std::string line;
    std::getline(table, line);
    o.expect(line.find(seg.segment_id) != std::string::npos, seg.segment_id + ": table title");
    std::getline(table, line);
    o.expect(line.find("Error rate") != std::string::npos && line.find("Sensitivity") != std::string::npos &&
                 line.find("Specificity") != std::string::npos,
             seg.segment_id + ": table header");
    std::size_t data_rows = 0, blocks = 0;
    while (std::getline(table, line)) {
      if (line.find_first_not_of("-=") == std::string::npos) continue;
      std::istringstream ls(line);
      std::vector<std::string> tok{std::istream_iterator<std::string>(ls), {}};
      if (tok.size() == 5) ++blocks;
      o.expect(tok.size() >= 4 && numeric(tok[tok.size() - 1]) && numeric(tok[tok.size() - 2]) &&
                   numeric(tok[tok.size() - 3]),
               seg.segment_id + ": table row '" + line + "'");
      ++data_rows;
    }
    o.expect(data_rows == 15 && blocks == 3, seg.segment_id + ": table is not 3 classifiers x 5 horizons");
  }
  return o;
}

LabeledData blobs(std::size_t n, int dim, double shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  LabeledData d;
  d.x.resize(static_cast<Eigen::Index>(n), dim);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.y[i] = static_cast<int>(i % 2);
    for (int k = 0; k < dim; ++k)
      d.x(static_cast<Eigen::Index>(i), k) = g(rng) + (d.y[i] ? shift : -shift) * (k < 2 ? 1.0 : 0.0);
  }
  return d;
}

Outcome check_cv_hygiene() {
  Outcome o;
  std::mt19937_64 rng(909);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 300;
    const std::size_t k = 2 + rng() % (n - 1);
    const auto plan = kfold_split(n, k, rng());
    std::vector<int> seen(n, 0);
    for (std::size_t f = 0; f < k; ++f) {
      const auto va = plan.validation(f);
      const auto tr = plan.training(f);
      o.expect(!va.empty(), "empty validation fold");
      o.expect(va.size() + tr.size() == n, "fold does not cover all rows");
      const std::set<std::size_t> vs(va.begin(), va.end());
      for (auto i : tr) o.expect(!vs.count(i), "row in both training and validation");
      for (auto i : va) ++seen[i];
    }
    for (int c : seen) o.expect(c == 1, "row not validated exactly once");
  }

  MlpSpec ann;
  ann.optimizer.eta = 0.01;
  ann.fit.epochs = 100;
  ann.fit.patience = 20;
  const std::vector<ClassifierConfig> configs{{"LR", LogRegSpec{}, true, KeepCount{3}},
                                              {"SVM", SvmSpec{}, true, KeepCount{3}},
                                              {"ANN", ann, true, std::nullopt}};
  const auto d = blobs(80, 4, 0.8, 5);
  const CvParams p{5, 2, 11, 1};
  for (const auto& cfg : configs) {
    const auto clean = cross_validate(d, cfg, p);
    for (std::size_t r = 0; r < p.repeats; ++r) {
      const auto plan = kfold_split(d.size(), p.k, derive_seed(p.seed, {r, 0}));
      for (std::size_t f = 0; f < p.k; ++f) {
        auto bad = d;
        for (auto i : plan.validation(f)) bad.y[i] = 1 - bad.y[i];
        const auto dirty = cross_validate(bad, cfg, p);
        const std::size_t at = r * p.k + f;
        o.expect(dirty.artifacts[at] == clean.artifacts[at],
                 cfg.id + " repeat " + std::to_string(r) + " fold " + std::to_string(f) + ": artifact changed");
        // the flip is visible to every other fold of the repeat
        const std::size_t other = r * p.k + (f + 1) % p.k;
        o.expect(dirty.artifacts[other] != clean.artifacts[other], cfg.id + ": flip had no effect elsewhere");
      }
    }
  }
  return o;
}

Outcome check_determinism(const fs::path& root, const fs::path& experiment_dir) {
  Outcome o;
  auto compare = [&](const std::string& cmd, const fs::path& first) {
    const auto again = root / (cmd + "_rerun");
    fs::remove_all(again);
    const int rc = run_cli(cmd + " --config '" + (first / "manifest.txt").string() + "' --out '" + again.string() + "'",
                           root / (cmd + "_rerun.log"));
    o.expect(rc == 0, cmd + " re-run exited with " + std::to_string(rc));
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(first)) names.insert(e.path().filename().string());
    std::set<std::string> names2;
    for (const auto& e : fs::directory_iterator(again)) names2.insert(e.path().filename().string());
    o.expect(names == names2, cmd + ": re-run produced a different file set");
    o.expect(names.size() > 1, cmd + ": no outputs");
    for (const auto& n : names)
      o.expect(slurp(first / n) == slurp(again / n), cmd + ": " + n + " differs on re-run");
  };
  for (const std::string cmd : {"synth", "embed", "sweep"}) {
    const auto first = root / cmd;
    fs::remove_all(first);
    const int rc = run_cli(cmd + " --out '" + first.string() + "'", root / (cmd + ".log"));
    o.expect(rc == 0, cmd + " exited with " + std::to_string(rc));
    if (rc == 0) compare(cmd, first);
  }
  if (fs::exists(experiment_dir / "manifest.txt")) compare("experiment", experiment_dir);
  else o.fail("experiment outputs missing");
  return o;
}

struct Criterion {
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const auto root = workdir("run");
  const auto experiment_dir = root / "experiment";
  const std::vector<Criterion> criteria{
      {"mlp backprop matches finite differences", 10, check_mlp_gradient},
      {"sne gradient matches finite differences", 10, check_sne_gradient},
      {"smo matches the dense qp oracle", 60, check_svm_oracle},
      {"jacobi matches characteristic roots", 60, check_jacobi},
      {"momentum and adam step algebra", 60, check_optimizer_algebra},
      {"imputation weights and neighbour fill", 60, check_imputation},
      {"logistic regression recovers coefficients", 5, check_logistic_recovery},
      {"mlp learns xor", 30, check_xor_capacity},
      {"end-to-end desk experiment", 600, [&] { return check_end_to_end(experiment_dir); }},
      {"cross-validation hygiene", 120, check_cv_hygiene},
      {"commands reproduce from their manifests", 600, [&] { return check_determinism(root, experiment_dir); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.expect(secs < c.limit_s, "took " + num(secs) + " s, limit " + num(c.limit_s) + " s");
    std::cout << (o.ok ? "PASS" : "FAIL") << "  " << c.name << "  (" << num(secs) << " s)";
    if (!o.ok) {
      std::cout << "  " << o.why;
      if (o.extra) std::cout << " (+" << o.extra << " more)";
      ++failed;
    }
    std::cout << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - static_cast<std::size_t>(failed) << "/"
            << criteria.size() << std::endl;
  return failed ? 1 : 0;
}
