#include "frictionml/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "frictionml/csv.hpp"
#include "frictionml/error.hpp"
#include "frictionml/rng.hpp"
#include "frictionml/structuring.hpp"
#include "frictionml/svm.hpp"

namespace frictionml {

LabeledData subset(const LabeledData& data, std::span<const std::size_t> rows) {
  LabeledData out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), data.x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= data.size()) throw ContractError("subset: row index out of range");
    out.x.row(static_cast<Eigen::Index>(i)) = data.x.row(static_cast<Eigen::Index>(rows[i]));
    out.y.push_back(data.y[rows[i]]);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::validation(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::training(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != fold) out.push_back(i);
  return out;
}

FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("kfold_split: k must be >= 2");
  if (k > n) throw ArgumentError("kfold_split: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order.begin(), order.end(), rng);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(n, 0);
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    for (std::size_t j = 0; j < len; ++j) plan.assignments[order[pos++]] = f;
  }
  return plan;
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

Confusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ContractError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_pos = predictions[i] == kSlipperyLabel;
    const bool true_pos = labels[i] == kSlipperyLabel;
    if (pred_pos && true_pos)
      ++c.tp;
    else if (pred_pos)
      ++c.fp;
    else if (true_pos)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

Metrics metrics(const Confusion& c) {
  if (c.total() == 0) throw ArgumentError("metrics: empty confusion matrix");
  Metrics m;
  m.error_rate = static_cast<double>(c.fn + c.fp) / static_cast<double>(c.total());
  if (c.tp + c.fn > 0) m.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tn + c.fp > 0) m.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return m;
}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool has_both_classes(std::span<const int> y) {
  bool zero = false, one = false;
  for (int v : y) (v == 0 ? zero : one) = true;
  return zero && one;
}

std::vector<int> fit_predict_logreg(const LogRegSpec& spec, const Eigen::MatrixXd& x, const std::vector<int>& y,
                                    const Eigen::MatrixXd& vx, FoldResult& out, std::ostream& art) {
  const LogRegModel model = fit_irls(x, y, spec.irls);
  if (model.separation_warning) out.warnings.push_back("logreg: possible separation");
  if (!model.converged) out.warnings.push_back("logreg: IRLS hit max_iter");
  write_logreg_csv(art, model);
  std::vector<int> pred;
  for (Eigen::Index i = 0; i < vx.rows(); ++i)
    pred.push_back(predict_proba(model, vx.row(i).transpose()) >= 0.5 ? 1 : 0);
  return pred;
}

std::vector<int> fit_predict_svm(const SvmSpec& spec, const Eigen::MatrixXd& x, const std::vector<int>& y,
                                 const Eigen::MatrixXd& vx, FoldResult& out, std::ostream& art) {
  double median = median_pairwise_distance(x);
  if (!(median > 0.0)) median = 1.0;
  SmoOptions opt;
  opt.c = spec.c;
  opt.kernel.sigma = spec.sigma_scale * median;
  opt.tol = spec.tol;
  opt.max_passes = spec.max_passes;
  std::vector<int> ys;
  ys.reserve(y.size());
  for (int v : y) ys.push_back(v == 1 ? 1 : -1);
  SvmModel model;
  try {
    model = fit_smo(x, ys, opt);
  } catch (const SvmNonConvergence& e) {
    out.warnings.push_back(std::string("svm: ") + e.what() + "; using best iterate");
    model = e.best();
  }
  write_svm_csv(art, model);
  std::vector<int> pred;
  for (Eigen::Index i = 0; i < vx.rows(); ++i) pred.push_back(predict(model, vx.row(i).transpose()) == 1 ? 1 : 0);
  return pred;
}

std::vector<int> fit_predict_mlp(const MlpSpec& spec, const Eigen::MatrixXd& x, const std::vector<int>& y,
                                 const Eigen::MatrixXd& vx, std::uint64_t seed, FoldResult& out, std::ostream& art) {
  const bool one_hot = spec.cost.kind == CostKind::kSoftmaxCeLogits;
  const auto n = static_cast<std::size_t>(x.rows());
  const auto dim = static_cast<std::size_t>(x.cols());

  MlpTopology topo;
  topo.layer_sizes.push_back(dim);
  if (spec.hidden_widths.empty())
    topo.layer_sizes.push_back(dim);
  else
    topo.layer_sizes.insert(topo.layer_sizes.end(), spec.hidden_widths.begin(), spec.hidden_widths.end());
  topo.layer_sizes.push_back(one_hot ? 2 : 1);
  topo.hidden = spec.hidden;
  topo.output = spec.output;
  topo.seed = derive_seed(seed, {1});

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {2}));
  shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n)));
  n_val = std::min(n_val, n > 0 ? n - 1 : 0);

  auto make = [&](std::size_t from, std::size_t to) {
    MlpData d;
    d.x.resize(static_cast<Eigen::Index>(to - from), x.cols());
    d.targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(to - from), one_hot ? 2 : 1);
    for (std::size_t i = from; i < to; ++i) {
      const auto r = static_cast<Eigen::Index>(i - from);
      d.x.row(r) = x.row(static_cast<Eigen::Index>(order[i]));
      const int label = y[order[i]];
      if (one_hot)
        d.targets(r, label) = 1.0;
      else
        d.targets(r, 0) = label;
    }
    return d;
  };
  const MlpData val = make(0, n_val);
  const MlpData train = make(n_val, n);

  FitOptions fit_opt = spec.fit;
  fit_opt.seed = derive_seed(seed, {3});
  MlpModel model = fit(init_mlp(topo), train, val, spec.cost, spec.optimizer, fit_opt);
  for (const auto& w : model.warnings) out.warnings.push_back("mlp: " + w);
  write_mlp_csv(art, model);
  std::vector<int> pred;
  for (Eigen::Index i = 0; i < vx.rows(); ++i) pred.push_back(predict(model, vx.row(i).transpose(), fit_opt.threshold));
  return pred;
}

}  // namespace

FoldResult train_fold(const LabeledData& train, const Eigen::MatrixXd& validation, const ClassifierConfig& config,
                      std::uint64_t seed) {
  if (train.x.rows() != static_cast<Eigen::Index>(train.size()))
    throw ContractError("train_fold: feature/label count mismatch");
  if (validation.cols() != train.x.cols()) throw ContractError("train_fold: validation dimension mismatch");
  FoldResult out;
  std::ostringstream art;
  art << "classifier=" << config.id << '\n';

  Eigen::MatrixXd x = train.x;
  Eigen::MatrixXd vx = validation;
  if (config.normalize) {
    const NormStats stats = fit_norm(x);
    x = apply_norm(x, stats);
    vx = apply_norm(vx, stats);
    art << "[norm]\n";
    write_norm_csv(art, stats);
  }
  if (config.pca) {
    const PcaModel pca = fit_pca(x, *config.pca);
    x = project_rows(pca, x);
    vx = project_rows(pca, vx);
    art << "[pca]\n";
    write_pca_csv(art, pca);
  }
  art << "[model]\n";
  out.predictions = std::visit(
      Overloaded{
          [&](const LogRegSpec& s) { return fit_predict_logreg(s, x, train.y, vx, out, art); },
          [&](const SvmSpec& s) { return fit_predict_svm(s, x, train.y, vx, out, art); },
          [&](const MlpSpec& s) { return fit_predict_mlp(s, x, train.y, vx, seed, out, art); },
          [&](const ConstantSpec& s) {
            art << "constant=" << s.label << '\n';
            return std::vector<int>(static_cast<std::size_t>(vx.rows()), s.label);
          },
      },
      config.model);
  out.artifact = art.str();
  return out;
}

Confusion EvalReport::pooled() const {
  Confusion c;
  for (const auto& f : per_fold) c += f;
  return c;
}

EvalReport cross_validate(const LabeledData& data, const ClassifierConfig& config, const CvParams& params) {
  if (data.x.rows() != static_cast<Eigen::Index>(data.size()))
    throw ContractError("cross_validate: feature/label count mismatch");
  if (params.repeats == 0) throw ArgumentError("cross_validate: repeats must be >= 1");
  if (!has_both_classes(data.y)) throw DegenerateLabelsError("cross_validate: dataset has a single class");

  constexpr std::size_t kMaxAttempts = 10;
  std::vector<FoldPlan> plans;
  for (std::size_t r = 0; r < params.repeats; ++r) {
    bool ok = false;
    for (std::size_t attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      FoldPlan plan = kfold_split(data.size(), params.k, derive_seed(params.seed, {r, attempt}));
      ok = true;
      for (std::size_t f = 0; f < params.k && ok; ++f) {
        const auto tr = plan.training(f);
        std::vector<int> ys;
        for (auto i : tr) ys.push_back(data.y[i]);
        ok = has_both_classes(ys);
      }
      if (ok) plans.push_back(std::move(plan));
    }
    if (!ok)
      throw DegenerateLabelsError("cross_validate: single-class training fold after " +
                                  std::to_string(kMaxAttempts) + " resplits");
  }

  const std::size_t tasks = params.repeats * params.k;
  std::vector<Confusion> confusions(tasks);
  std::vector<FoldResult> results(tasks);
  std::vector<std::exception_ptr> errors(tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      try {
        const std::size_t r = t / params.k, f = t % params.k;
        const auto tr = plans[r].training(f);
        const auto va = plans[r].validation(f);
        const LabeledData train = subset(data, tr);
        const LabeledData val = subset(data, va);
        results[t] = train_fold(train, val.x, config, derive_seed(params.seed, {r, f, 0x5eedULL}));
        confusions[t] = confusion(results[t].predictions, val.y);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  std::size_t threads = params.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : params.threads;
  threads = std::min(threads, tasks);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  EvalReport report;
  report.classifier_id = config.id;
  report.k = params.k;
  report.repeats = params.repeats;
  report.seed = params.seed;
  report.per_fold = std::move(confusions);
  for (auto& res : results) {
    for (auto& w : res.warnings)
      if (std::find(report.warnings.begin(), report.warnings.end(), w) == report.warnings.end())
        report.warnings.push_back(std::move(w));
    report.artifacts.push_back(std::move(res.artifact));
  }
  const Metrics m = metrics(report.pooled());
  report.error_rate = m.error_rate;
  report.sensitivity = m.sensitivity;
  report.specificity = m.specificity;
  return report;
}

SweepResult sweep(const LabeledData& data, std::span<const ClassifierConfig> grid, const CvParams& params) {
  if (grid.empty()) throw ArgumentError("sweep: empty grid");
  SweepResult out;
  for (const auto& config : grid) {
    SweepEntry entry;
    try {
      entry.report = cross_validate(data, config, params);
    } catch (const Error& e) {
      entry.error = e.what();
    }
    out.entries.push_back(std::move(entry));
  }
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    const auto& cand = out.entries[i].report;
    if (!cand) continue;
    if (!out.winner) {
      out.winner = i;
      continue;
    }
    const auto& best = *out.entries[*out.winner].report;
    const double cs = cand->sensitivity.value_or(-1.0), bs = best.sensitivity.value_or(-1.0);
    if (cand->error_rate < best.error_rate || (cand->error_rate == best.error_rate && cs > bs)) out.winner = i;
  }
  return out;
}

std::string report_csv_header() { return "classifier,horizon_min,error_rate,sensitivity,specificity,k,repeats,seed"; }

std::string report_csv_row(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  return csv::join({r.classifier_id, csv::format_double(r.horizon_min), csv::format_double(r.error_rate),
                    opt(r.sensitivity), opt(r.specificity), std::to_string(r.k), std::to_string(r.repeats),
                    std::to_string(r.seed)});
}

void write_fold_csv(std::ostream& out, const EvalReport& report) {
  out << "repeat,fold,tp,fp,tn,fn\n";
  for (std::size_t i = 0; i < report.per_fold.size(); ++i) {
    const auto& c = report.per_fold[i];
    out << i / report.k << ',' << i % report.k << ',' << c.tp << ',' << c.fp << ',' << c.tn << ',' << c.fn << '\n';
  }
}

}  // namespace frictionml
