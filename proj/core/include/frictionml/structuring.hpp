#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frictionml/dataset.hpp"

namespace frictionml {

struct WindowSpec {
  std::int64_t T = 3 * 3600;               // window length, seconds
  std::size_t f_s = 12;                    // columns per window
  std::vector<Field> channels{Field::kFriction};  // d = channels.size()
  std::int64_t horizon = 0;                // prediction lead time, seconds
  std::int64_t quantize_interval = 120;    // seconds
  std::int64_t history_span = 3 * 3600;    // lookback of the weighted friction history
  double radius_km = 3.334;

  std::size_t d() const { return channels.size(); }
};

// Throws ArgumentError on a violated invariant.
void validate(const WindowSpec& spec);

/// d x f_s matrix of the measurements in (t - T, t]. Column k is slot k in
/// time order; missing columns hold NaN.
struct StructuredWindow {
  Eigen::MatrixXd values;
  std::vector<bool> missing_mask;
  std::int64_t t = 0;

  std::size_t observed_count() const;
};

struct FeatureVector {
  std::vector<double> z;
  int label = 0;
  std::int64_t t = 0;
  std::string segment_id;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;              // population
  std::vector<std::size_t> zero_std;    // indices with std == 0

  std::size_t dim() const { return mean.size(); }
};

/// Averages the records of each non-empty interval (per segment). The output
/// timestamp is the interval start; confidence and wiper speed take the
/// median rounded half-up. Input must be sorted by timestamp.
std::vector<Measurement> quantize(std::span<const Measurement> measurements, std::int64_t interval);

/// Down-samples `stream` (sorted) into the window ending at `t`: each of the
/// f_s slots keeps only its latest record. A slot whose latest record has a
/// non-finite value in any channel counts as missing. Throws EmptyWindowError
/// when every slot is missing.
StructuredWindow structure_window(std::span<const Measurement> stream, const WindowSpec& spec,
                                  std::int64_t t);

// Weights of the two-neighbour scheme for column `tau`: 0.5 on each side, or
// empty when a side is missing.
std::vector<double> neighbor_weights(const std::vector<bool>& missing_mask, std::size_t tau);

// a / |m - tau| over observed columns m, normalised to sum to one.
std::vector<double> inverse_distance_weights(const std::vector<bool>& missing_mask, std::size_t tau);

// Fills each missing column from its two observed neighbours; columns at the
// edge or next to another gap fall back to inverse-distance weights.
StructuredWindow impute_neighbor(const StructuredWindow& window);
StructuredWindow impute_inverse_distance(const StructuredWindow& window);

// Column-major flattening: column 0 first. Throws ContractError while any
// column is still missing.
std::vector<double> vectorize(const StructuredWindow& window);

// w_i = max(0, 1 - dt_i/history_span) * max(0, 1 - dd_i/radius_km)
std::vector<double> history_weights(std::span<const double> deltas_t, std::span<const double> deltas_d,
                                    const WindowSpec& spec);

// Sets history_friction on every record to the weighted mean of strictly
// earlier friction readings of the same stream; NaN when no weight.
void attach_history(std::vector<Measurement>& stream, const WindowSpec& spec);

NormStats fit_norm(std::span<const FeatureVector> samples);
NormStats fit_norm(const Eigen::MatrixXd& rows);
FeatureVector apply_norm(const FeatureVector& sample, const NormStats& stats);
Eigen::MatrixXd apply_norm(const Eigen::MatrixXd& rows, const NormStats& stats);
void write_norm_csv(std::ostream& out, const NormStats& stats);

void write_feature_csv(std::ostream& out, std::span<const FeatureVector> samples);

}  // namespace frictionml
