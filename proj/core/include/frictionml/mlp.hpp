#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frictionml/error.hpp"

namespace frictionml {

enum class ActivationKind { kThreshold, kSigmoid, kTanh, kRelu, kSoftplus, kSignum, kLinear };

struct Activation {
  ActivationKind kind = ActivationKind::kRelu;
  double c = 1.0;  // sigmoid slope
  double a = 1.0;  // tanh: a * tanh(b p)
  double b = 1.0;

  static Activation threshold() { return {ActivationKind::kThreshold}; }
  static Activation sigmoid(double slope = 1.0) { return {ActivationKind::kSigmoid, slope}; }
  static Activation tanh(double a = 1.0, double b = 1.0) { return {ActivationKind::kTanh, 1.0, a, b}; }
  static Activation relu() { return {ActivationKind::kRelu}; }
  static Activation softplus() { return {ActivationKind::kSoftplus}; }
  static Activation signum() { return {ActivationKind::kSignum}; }
  static Activation linear() { return {ActivationKind::kLinear}; }
};

double activate(const Activation& act, double p);
// Exact derivative; relu'(0) = 0, threshold and signum are flat everywhere.
double activate_deriv(const Activation& act, double p);
bool is_trainable(const Activation& act);
std::string activation_name(const Activation& act);
Activation parse_activation(const std::string& name);

struct MlpTopology {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  Activation hidden = Activation::relu();
  Activation output = Activation::linear();
  std::uint64_t seed = 1;
};

// Layer l maps layer_sizes[l] -> layer_sizes[l+1]; column 0 holds the bias.
using Weights = std::vector<Eigen::MatrixXd>;

struct MlpModel {
  Weights weights;
  MlpTopology topology;
  Weights best_weights;
  double best_val_error = 1.0;
  std::vector<double> best_val_history;  // best error after each epoch
  std::size_t epochs_run = 0;
  std::vector<std::string> warnings;
};

// Throws ConfigError unless there is at least one hidden layer.
MlpModel init_mlp(const MlpTopology& topology);

enum class CostKind { kSse, kBce, kSoftmaxCeLogits };
struct CostSpec {
  CostKind kind = CostKind::kSse;
};
std::string cost_name(CostKind kind);
CostKind parse_cost(const std::string& name);

enum class OptimizerKind { kGd, kSgd, kMomentum, kAdam };
struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kAdam;
  double eta = 1e-3;
  double alpha = 0.9;
  double gamma1 = 0.9;
  double gamma2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
};
std::string optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

/// Per-layer induced local fields v and outputs y; y[0] is the input and
/// y[l + 1] = phi(v[l]).
struct ForwardCache {
  std::vector<Eigen::VectorXd> v;
  std::vector<Eigen::VectorXd> y;
  const Eigen::VectorXd& output() const { return y.back(); }
};

ForwardCache forward(const MlpModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd predict_output(const MlpModel& model, const Eigen::VectorXd& x);

double cost_value(const CostSpec& cost, const Eigen::VectorXd& output, const Eigen::VectorXd& target);

/// dE/dw for every weight (bias column included) of one sample. Throws
/// ConfigError when the cost does not fit the output activation.
Weights backprop(const MlpModel& model, const ForwardCache& cache, const Eigen::VectorXd& target,
                 const CostSpec& cost);
Weights backprop(const MlpModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& target,
                 const CostSpec& cost);

// Mean cost and mean gradient over the columns of a batch.
double batch_gradient(const MlpModel& model, const Eigen::MatrixXd& x_cols, const Eigen::MatrixXd& target_cols,
                      const CostSpec& cost, Weights* grad);

struct OptimizerState {
  Weights velocity;  // momentum
  Weights m;         // adam first moment
  Weights v;         // adam second moment
  long long last_step = -1;
};

OptimizerState make_optimizer_state(const OptimizerSpec& spec, const Weights& weights);

/// One update with the 0-based step index `n`; Adam bias correction uses
/// t = n + 1. Throws ContractError when `n` does not advance.
void optimizer_step(const OptimizerSpec& spec, OptimizerState& state, Weights& weights, const Weights& grad,
                    std::size_t n);

struct FitOptions {
  std::size_t epochs = 500;
  std::size_t patience = 50;  // 0 disables
  double threshold = 0.5;
  std::uint64_t seed = 1;
};

// Rows are samples. Targets hold one row per sample (0/1 for a single output).
struct MlpData {
  Eigen::MatrixXd x;
  Eigen::MatrixXd targets;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t epoch, Weights last_finite)
      : Error("mlp: non-finite loss in epoch " + std::to_string(epoch)),
        epoch_(epoch),
        weights_(std::move(last_finite)) {}
  std::size_t epoch() const noexcept { return epoch_; }
  const Weights& last_finite_weights() const noexcept { return weights_; }

 private:
  std::size_t epoch_;
  Weights weights_;
};

/// Mini-batch training with a seeded reshuffle every epoch. After each epoch
/// the validation error rate is measured and the best weights are kept; the
/// returned model carries them in `weights`.
MlpModel fit(MlpModel model, const MlpData& train, const MlpData& val, const CostSpec& cost,
             const OptimizerSpec& opt, const FitOptions& options);

// Single output: 1 when output >= threshold. Several outputs: argmax.
int predict(const MlpModel& model, const Eigen::VectorXd& x, double threshold = 0.5);
double error_rate(const MlpModel& model, const MlpData& data, double threshold = 0.5);

// key=value preamble, then "layer,<l>,<rows>,<cols>" blocks of weight rows.
void write_mlp_csv(std::ostream& out, const MlpModel& model);

}  // namespace frictionml
