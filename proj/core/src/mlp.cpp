#include "frictionml/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "frictionml/csv.hpp"
#include "frictionml/rng.hpp"

namespace frictionml {

double activate(const Activation& act, double p) {
  switch (act.kind) {
    case ActivationKind::kThreshold: return p < 0.0 ? 0.0 : 1.0;
    case ActivationKind::kSigmoid: {
      const double z = act.c * p;
      if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
      const double e = std::exp(z);
      return e / (1.0 + e);
    }
    case ActivationKind::kTanh: return act.a * std::tanh(act.b * p);
    case ActivationKind::kRelu: return p > 0.0 ? p : 0.0;
    case ActivationKind::kSoftplus: return p > 30.0 ? p : std::log1p(std::exp(p));
    case ActivationKind::kSignum: return p < 0.0 ? -1.0 : 1.0;
    case ActivationKind::kLinear: return p;
  }
  return p;
}

double activate_deriv(const Activation& act, double p) {
  switch (act.kind) {
    case ActivationKind::kThreshold:
    case ActivationKind::kSignum: return 0.0;
    case ActivationKind::kSigmoid: {
      const double s = activate(act, p);
      return act.c * s * (1.0 - s);
    }
    case ActivationKind::kTanh: {
      const double t = std::tanh(act.b * p);
      return act.a * act.b * (1.0 - t * t);
    }
    case ActivationKind::kRelu: return p > 0.0 ? 1.0 : 0.0;
    case ActivationKind::kSoftplus: {
      if (p >= 0.0) return 1.0 / (1.0 + std::exp(-p));
      const double e = std::exp(p);
      return e / (1.0 + e);
    }
    case ActivationKind::kLinear: return 1.0;
  }
  return 0.0;
}

bool is_trainable(const Activation& act) {
  return act.kind != ActivationKind::kThreshold && act.kind != ActivationKind::kSignum;
}

std::string activation_name(const Activation& act) {
  switch (act.kind) {
    case ActivationKind::kThreshold: return "threshold";
    case ActivationKind::kSigmoid: return "sigmoid";
    case ActivationKind::kTanh: return "tanh";
    case ActivationKind::kRelu: return "relu";
    case ActivationKind::kSoftplus: return "softplus";
    case ActivationKind::kSignum: return "signum";
    case ActivationKind::kLinear: return "linear";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "threshold") return Activation::threshold();
  if (name == "sigmoid") return Activation::sigmoid();
  if (name == "tanh") return Activation::tanh();
  if (name == "relu") return Activation::relu();
  if (name == "softplus") return Activation::softplus();
  if (name == "signum") return Activation::signum();
  if (name == "linear") return Activation::linear();
  throw ConfigError("unknown activation '" + name + "'");
}

std::string cost_name(CostKind kind) {
  switch (kind) {
    case CostKind::kSse: return "sse";
    case CostKind::kBce: return "bce";
    case CostKind::kSoftmaxCeLogits: return "softmax_ce_logits";
  }
  return "?";
}

CostKind parse_cost(const std::string& name) {
  if (name == "sse") return CostKind::kSse;
  if (name == "bce") return CostKind::kBce;
  if (name == "softmax_ce_logits") return CostKind::kSoftmaxCeLogits;
  throw ConfigError("unknown cost '" + name + "'");
}

std::string optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kGd: return "gd";
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "gd") return OptimizerKind::kGd;
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

MlpModel init_mlp(const MlpTopology& topology) {
  const auto& sizes = topology.layer_sizes;
  if (sizes.size() < 3) throw ConfigError("mlp: need input, at least one hidden layer and output");
  for (auto s : sizes)
    if (s == 0) throw ConfigError("mlp: layer sizes must be >= 1");
  MlpModel model;
  model.topology = topology;
  Rng rng(derive_seed(topology.seed, {0x1217ULL}));
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Eigen::MatrixXd w(static_cast<Eigen::Index>(sizes[l + 1]), static_cast<Eigen::Index>(sizes[l] + 1));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = uniform(rng, -0.1, 0.1);
    model.weights.push_back(std::move(w));
  }
  model.best_weights = model.weights;
  if (!is_trainable(topology.hidden) || !is_trainable(topology.output))
    model.warnings.push_back("threshold/signum activations have zero derivative; training will not move those layers");
  return model;
}

namespace {

struct BatchCache {
  std::vector<Eigen::MatrixXd> v;
  std::vector<Eigen::MatrixXd> y;
};

const Activation& layer_activation(const MlpModel& model, std::size_t l) {
  return l + 1 == model.weights.size() ? model.topology.output : model.topology.hidden;
}

BatchCache forward_batch(const MlpModel& model, const Weights& w, const Eigen::MatrixXd& x_cols) {
  if (static_cast<std::size_t>(x_cols.rows()) != model.topology.layer_sizes.front())
    throw ContractError("mlp: expected input dimension " + std::to_string(model.topology.layer_sizes.front()) +
                        ", got " + std::to_string(x_cols.rows()));
  BatchCache c;
  c.y.push_back(x_cols);
  for (std::size_t l = 0; l < w.size(); ++l) {
    const auto& wl = w[l];
    Eigen::MatrixXd v = (wl.rightCols(wl.cols() - 1) * c.y.back()).colwise() + wl.col(0);
    const Activation& act = layer_activation(model, l);
    Eigen::MatrixXd y = v.unaryExpr([&](double p) { return activate(act, p); });
    c.v.push_back(std::move(v));
    c.y.push_back(std::move(y));
  }
  return c;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  Eigen::VectorXd e = (v.array() - mx).exp();
  return e / e.sum();
}

void check_cost(const MlpModel& model, const CostSpec& cost) {
  const auto out_kind = model.topology.output.kind;
  if (cost.kind == CostKind::kSoftmaxCeLogits && out_kind != ActivationKind::kLinear)
    throw ConfigError("softmax_ce_logits requires a linear output layer");
  if (cost.kind == CostKind::kBce && out_kind != ActivationKind::kSigmoid)
    throw ConfigError("bce requires a sigmoid output layer");
}

// dE/dv at the output for one batch column.
Eigen::VectorXd output_delta(const MlpModel& model, const CostSpec& cost, const Eigen::VectorXd& v,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& d) {
  const Activation& act = model.topology.output;
  switch (cost.kind) {
    case CostKind::kSse: {
      Eigen::VectorXd delta = y - d;  // -e
      for (Eigen::Index k = 0; k < delta.size(); ++k) delta(k) *= activate_deriv(act, v(k));
      return delta;
    }
    case CostKind::kBce: {
      const double inv_n = 1.0 / static_cast<double>(y.size());
      Eigen::VectorXd delta(y.size());
      for (Eigen::Index k = 0; k < y.size(); ++k)
        delta(k) = inv_n * (y(k) - d(k)) / (y(k) * (1.0 - y(k))) * activate_deriv(act, v(k));
      return delta;
    }
    case CostKind::kSoftmaxCeLogits: return softmax(v) * d.sum() - d;
  }
  return {};
}

double batch_grad_impl(const MlpModel& model, const Weights& w, const Eigen::MatrixXd& x_cols,
                       const Eigen::MatrixXd& t_cols, const CostSpec& cost, Weights* grad) {
  check_cost(model, cost);
  const auto batch = x_cols.cols();
  if (t_cols.cols() != batch) throw ContractError("mlp: target count mismatch");
  if (static_cast<std::size_t>(t_cols.rows()) != model.topology.layer_sizes.back())
    throw ContractError("mlp: target dimension mismatch");
  const BatchCache c = forward_batch(model, w, x_cols);
  const std::size_t layers = w.size();

  double loss = 0.0;
  Eigen::MatrixXd delta(t_cols.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::VectorXd out = c.y.back().col(b);
    loss += cost_value(cost, out, t_cols.col(b));
    if (grad) delta.col(b) = output_delta(model, cost, c.v.back().col(b), out, t_cols.col(b));
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  if (!grad) return loss * inv_b;

  grad->assign(layers, Eigen::MatrixXd());
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::MatrixXd& prev = c.y[l];
    Eigen::MatrixXd g(w[l].rows(), w[l].cols());
    g.col(0) = delta.rowwise().sum() * inv_b;
    g.rightCols(g.cols() - 1) = delta * prev.transpose() * inv_b;
    (*grad)[l] = std::move(g);
    if (l == 0) break;
    const Activation& act = model.topology.hidden;
    Eigen::MatrixXd back = w[l].rightCols(w[l].cols() - 1).transpose() * delta;
    const Eigen::MatrixXd& v = c.v[l - 1];
    for (Eigen::Index r = 0; r < back.rows(); ++r)
      for (Eigen::Index col = 0; col < back.cols(); ++col) back(r, col) *= activate_deriv(act, v(r, col));
    delta = std::move(back);
  }
  return loss * inv_b;
}

}  // namespace

ForwardCache forward(const MlpModel& model, const Eigen::VectorXd& x) {
  const BatchCache c = forward_batch(model, model.weights, x);
  ForwardCache out;
  for (const auto& v : c.v) out.v.push_back(v.col(0));
  for (const auto& y : c.y) out.y.push_back(y.col(0));
  return out;
}

Eigen::VectorXd predict_output(const MlpModel& model, const Eigen::VectorXd& x) {
  return forward_batch(model, model.weights, x).y.back().col(0);
}

double cost_value(const CostSpec& cost, const Eigen::VectorXd& output, const Eigen::VectorXd& target) {
  if (output.size() != target.size()) throw ContractError("cost_value: shape mismatch");
  switch (cost.kind) {
    case CostKind::kSse: return 0.5 * (target - output).squaredNorm();
    case CostKind::kBce: {
      double s = 0.0;
      for (Eigen::Index k = 0; k < output.size(); ++k) {
        const double a = output(k);
        if (!(a > 0.0 && a < 1.0)) throw ArgumentError("cost_value: bce output outside (0,1)");
        s -= target(k) * std::log(a) + (1.0 - target(k)) * std::log1p(-a);
      }
      return s / static_cast<double>(output.size());
    }
    case CostKind::kSoftmaxCeLogits: {
      const double mx = output.maxCoeff();
      const double lse = mx + std::log((output.array() - mx).exp().sum());
      return -(target.array() * (output.array() - lse)).sum();
    }
  }
  return 0.0;
}

Weights backprop(const MlpModel& model, const ForwardCache& cache, const Eigen::VectorXd& target,
                 const CostSpec& cost) {
  check_cost(model, cost);
  if (target.size() != cache.output().size()) throw ContractError("backprop: target dimension mismatch");
  const std::size_t layers = model.weights.size();
  Weights grad(layers);
  Eigen::VectorXd delta = output_delta(model, cost, cache.v.back(), cache.output(), target);
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::VectorXd& prev = cache.y[l];
    Eigen::MatrixXd g(model.weights[l].rows(), model.weights[l].cols());
    g.col(0) = delta;
    g.rightCols(g.cols() - 1) = delta * prev.transpose();
    grad[l] = std::move(g);
    if (l == 0) break;
    // hidden local gradient: phi'(v_j) * sum_k delta_k w_kj
    Eigen::VectorXd back = model.weights[l].rightCols(model.weights[l].cols() - 1).transpose() * delta;
    for (Eigen::Index j = 0; j < back.size(); ++j) back(j) *= activate_deriv(model.topology.hidden, cache.v[l - 1](j));
    delta = std::move(back);
  }
  return grad;
}

Weights backprop(const MlpModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& target,
                 const CostSpec& cost) {
  return backprop(model, forward(model, x), target, cost);
}

double batch_gradient(const MlpModel& model, const Eigen::MatrixXd& x_cols, const Eigen::MatrixXd& target_cols,
                      const CostSpec& cost, Weights* grad) {
  return batch_grad_impl(model, model.weights, x_cols, target_cols, cost, grad);
}

OptimizerState make_optimizer_state(const OptimizerSpec& spec, const Weights& weights) {
  OptimizerState s;
  auto zeros = [&] {
    Weights z;
    for (const auto& w : weights) z.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    return z;
  };
  if (spec.kind == OptimizerKind::kMomentum) s.velocity = zeros();
  if (spec.kind == OptimizerKind::kAdam) {
    s.m = zeros();
    s.v = zeros();
  }
  return s;
}

void optimizer_step(const OptimizerSpec& spec, OptimizerState& state, Weights& weights, const Weights& grad,
                    std::size_t n) {
  if (static_cast<long long>(n) <= state.last_step)
    throw ContractError("optimizer_step: step index " + std::to_string(n) + " already used");
  if (grad.size() != weights.size()) throw ContractError("optimizer_step: gradient shape mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (grad[l].rows() != weights[l].rows() || grad[l].cols() != weights[l].cols())
      throw ContractError("optimizer_step: gradient shape mismatch");

  switch (spec.kind) {
    case OptimizerKind::kGd:
    case OptimizerKind::kSgd:
      for (std::size_t l = 0; l < weights.size(); ++l) weights[l] -= spec.eta * grad[l];
      break;
    case OptimizerKind::kMomentum:
      if (state.velocity.size() != weights.size()) throw ContractError("optimizer_step: state/kind mismatch");
      for (std::size_t l = 0; l < weights.size(); ++l) {
        state.velocity[l] = spec.alpha * state.velocity[l] - spec.eta * grad[l];
        weights[l] += state.velocity[l];
      }
      break;
    case OptimizerKind::kAdam: {
      if (state.m.size() != weights.size()) throw ContractError("optimizer_step: state/kind mismatch");
      const double t = static_cast<double>(n + 1);
      const double c1 = 1.0 - std::pow(spec.gamma1, t);
      const double c2 = 1.0 - std::pow(spec.gamma2, t);
      for (std::size_t l = 0; l < weights.size(); ++l) {
        state.m[l] = spec.gamma1 * state.m[l] + (1.0 - spec.gamma1) * grad[l];
        state.v[l] = spec.gamma2 * state.v[l] + (1.0 - spec.gamma2) * grad[l].cwiseProduct(grad[l]);
        const Eigen::ArrayXXd m_hat = state.m[l].array() / c1;
        const Eigen::ArrayXXd v_hat = state.v[l].array() / c2;
        weights[l].array() -= spec.eta * m_hat / (v_hat.sqrt() + spec.epsilon);
      }
      break;
    }
  }
  state.last_step = static_cast<long long>(n);
}

int predict(const MlpModel& model, const Eigen::VectorXd& x, double threshold) {
  const Eigen::VectorXd out = predict_output(model, x);
  if (out.size() == 1) return out(0) >= threshold ? 1 : 0;
  Eigen::Index arg = 0;
  out.maxCoeff(&arg);
  return static_cast<int>(arg);
}

namespace {

double error_rate_with(const MlpModel& model, const Weights& w, const MlpData& data, double threshold) {
  if (data.x.rows() == 0) return 0.0;
  const Eigen::MatrixXd out = forward_batch(model, w, data.x.transpose()).y.back();
  std::size_t wrong = 0;
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    int pred, truth;
    if (out.rows() == 1) {
      pred = out(0, i) >= threshold ? 1 : 0;
      truth = data.targets(i, 0) >= 0.5 ? 1 : 0;
    } else {
      Eigen::Index a = 0, b = 0;
      out.col(i).maxCoeff(&a);
      data.targets.row(i).maxCoeff(&b);
      pred = static_cast<int>(a);
      truth = static_cast<int>(b);
    }
    wrong += pred != truth ? 1 : 0;
  }
  return static_cast<double>(wrong) / static_cast<double>(out.cols());
}

bool all_finite(const Weights& w) {
  return std::all_of(w.begin(), w.end(), [](const Eigen::MatrixXd& m) { return m.allFinite(); });
}

}  // namespace

double error_rate(const MlpModel& model, const MlpData& data, double threshold) {
  return error_rate_with(model, model.weights, data, threshold);
}

MlpModel fit(MlpModel model, const MlpData& train, const MlpData& val, const CostSpec& cost,
             const OptimizerSpec& opt, const FitOptions& options) {
  check_cost(model, cost);
  if (train.x.rows() == 0) throw ArgumentError("mlp fit: empty training set");
  if (train.targets.rows() != train.x.rows() || val.targets.rows() != val.x.rows())
    throw ContractError("mlp fit: target count mismatch");
  if (!(opt.eta >= 0.0)) throw ArgumentError("mlp fit: eta must be >= 0");
  const bool use_val = val.x.rows() > 0;

  model.best_weights = model.weights;
  model.best_val_error = use_val ? error_rate(model, val, options.threshold) : 1.0;
  model.best_val_history.clear();
  model.epochs_run = 0;
  if (options.epochs == 0) return model;

  const auto n = static_cast<std::size_t>(train.x.rows());
  const std::size_t batch =
      opt.kind == OptimizerKind::kGd ? n : std::max<std::size_t>(1, std::min(opt.batch_size, n));
  OptimizerState state = make_optimizer_state(opt, model.weights);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Eigen::MatrixXd xt = train.x.transpose();
  const Eigen::MatrixXd tt = train.targets.transpose();
  Eigen::MatrixXd xb, tb;
  Weights grad;
  std::size_t step = 0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (opt.kind != OptimizerKind::kGd) {
      Rng rng(derive_seed(options.seed, {epoch}));
      shuffle(order.begin(), order.end(), rng);
    }
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      xb.resize(xt.rows(), static_cast<Eigen::Index>(len));
      tb.resize(tt.rows(), static_cast<Eigen::Index>(len));
      for (std::size_t k = 0; k < len; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = xt.col(static_cast<Eigen::Index>(order[start + k]));
        tb.col(static_cast<Eigen::Index>(k)) = tt.col(static_cast<Eigen::Index>(order[start + k]));
      }
      const Weights before = model.weights;
      const double loss = batch_grad_impl(model, model.weights, xb, tb, cost, &grad);
      if (!std::isfinite(loss) || !all_finite(grad)) throw TrainingDiverged(epoch, before);
      optimizer_step(opt, state, model.weights, grad, step++);
      if (!all_finite(model.weights)) throw TrainingDiverged(epoch, before);
    }
    model.epochs_run = epoch + 1;

    const MlpData& monitor = use_val ? val : train;
    const double err = error_rate(model, monitor, options.threshold);
    if (err < model.best_val_error || (epoch == 0 && !use_val)) {
      model.best_val_error = err;
      model.best_weights = model.weights;
      since_best = 0;
    } else {
      ++since_best;
    }
    model.best_val_history.push_back(model.best_val_error);
    if (model.best_val_error == 0.0) break;
    if (options.patience > 0 && since_best >= options.patience) break;
  }
  model.weights = model.best_weights;
  return model;
}

void write_mlp_csv(std::ostream& out, const MlpModel& model) {
  const auto& t = model.topology;
  out << "layer_sizes=";
  for (std::size_t i = 0; i < t.layer_sizes.size(); ++i) out << (i ? ";" : "") << t.layer_sizes[i];
  out << "\nhidden_activation=" << activation_name(t.hidden) << "\noutput_activation=" << activation_name(t.output)
      << "\nseed=" << t.seed << "\nbest_val_error=" << csv::format_double(model.best_val_error)
      << "\nepochs_run=" << model.epochs_run << '\n';
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const auto& w = model.weights[l];
    out << "layer," << l << ',' << w.rows() << ',' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? "," : "") << csv::format_double(w(r, c));
      out << '\n';
    }
  }
}

}  // namespace frictionml
