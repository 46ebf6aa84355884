#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "frictionml/logreg.hpp"
#include "frictionml/mlp.hpp"
#include "frictionml/pca.hpp"

namespace frictionml {

// Rows of x are samples; y holds dataset labels (0 = slippery, 1 = high friction).
struct LabeledData {
  Eigen::MatrixXd x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

LabeledData subset(const LabeledData& data, std::span<const std::size_t> rows);

struct FoldPlan {
  std::size_t k = 5;
  std::vector<std::size_t> assignments;  // fold index per sample
  std::uint64_t seed = 0;

  std::vector<std::size_t> validation(std::size_t fold) const;
  std::vector<std::size_t> training(std::size_t fold) const;
};

/// Seeded shuffle, then contiguous chunks; the first n % k folds get one
/// extra sample. Throws ArgumentError when k < 2 or k > n.
FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

// Positive class = slippery (dataset label 0).
struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  Confusion& operator+=(const Confusion& o);
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline constexpr int kSlipperyLabel = 0;

Confusion confusion(std::span<const int> predictions, std::span<const int> labels);

struct Metrics {
  double error_rate = 0.0;
  std::optional<double> sensitivity;  // absent when tp + fn == 0
  std::optional<double> specificity;  // absent when tn + fp == 0
};

Metrics metrics(const Confusion& c);

struct LogRegSpec {
  IrlsOptions irls;
};

// sigma = sigma_scale * median pairwise distance of the (preprocessed) training fold
struct SvmSpec {
  double c = 1.0;
  double sigma_scale = 1.0;
  double tol = 1e-3;
  std::size_t max_passes = 10;
};

struct MlpSpec {
  std::vector<std::size_t> hidden_widths;  // empty: one layer as wide as the input
  Activation hidden = Activation::relu();
  Activation output = Activation::linear();
  CostSpec cost;
  OptimizerSpec optimizer;
  FitOptions fit;
  double val_fraction = 0.2;  // inner split of the training fold for checkpointing
};

struct ConstantSpec {
  int label = kSlipperyLabel;
};

using ModelSpec = std::variant<LogRegSpec, SvmSpec, MlpSpec, ConstantSpec>;

struct ClassifierConfig {
  std::string id = "LR";
  ModelSpec model = LogRegSpec{};
  bool normalize = true;
  std::optional<PcaPolicy> pca;
};

struct FoldResult {
  std::vector<int> predictions;
  std::string artifact;  // serialized preprocessing + model
  std::vector<std::string> warnings;
};

/// Fits preprocessing and the classifier on `train` only, then predicts `validation` rows.
FoldResult train_fold(const LabeledData& train, const Eigen::MatrixXd& validation, const ClassifierConfig& config,
                      std::uint64_t seed);

struct CvParams {
  std::size_t k = 5;
  std::size_t repeats = 5;
  std::uint64_t seed = 1;
  std::size_t threads = 1;  // 0: hardware concurrency
};

struct EvalReport {
  std::string classifier_id;
  double horizon_min = 0.0;
  std::vector<Confusion> per_fold;  // repeat-major
  double error_rate = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::size_t k = 0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
  std::vector<std::string> artifacts;  // one per fold, same order as per_fold

  Confusion pooled() const;
};

/// Every repeat evaluates each sample exactly once, so the repeat average of
/// pooled metrics equals the metrics of the counts summed over all folds.
EvalReport cross_validate(const LabeledData& data, const ClassifierConfig& config, const CvParams& params);

struct SweepEntry {
  std::optional<EvalReport> report;
  std::string error;  // set when the config failed
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  std::optional<std::size_t> winner;  // lowest error, ties -> higher sensitivity
};

SweepResult sweep(const LabeledData& data, std::span<const ClassifierConfig> grid, const CvParams& params);

// classifier,horizon_min,error_rate,sensitivity,specificity,k,repeats,seed
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);
// repeat,fold,tp,fp,tn,fn
void write_fold_csv(std::ostream& out, const EvalReport& report);

}  // namespace frictionml
