#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace frictionml {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct GeoPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// Great-circle distance in kilometres.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

/// One time-stamped vehicle/weather observation. Covariates hold NaN when the
/// source row left them empty.
struct Measurement {
  std::int64_t timestamp = 0;  // seconds since epoch, > 0
  std::string segment_id;
  GeoPoint position;
  double friction = 0.0;  // [0,1]
  int confidence = 0;     // ordinal, >= 0
  double wiper_speed = kMissing;  // ordinal, integral >= 0
  double ambient_temp = kMissing;
  double surface_temp = kMissing;
  double dewpoint_temp = kMissing;
  double humidity = kMissing;  // [0,1]
  double rainfall = kMissing;  // mm / 30 min
  double snowfall = kMissing;  // mm / 30 min
  double windspeed = kMissing;  // m/s

  // Derived during structuring (weighted earlier friction); never serialized.
  double history_friction = kMissing;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

// Numeric fields addressable by name; used for window channels, the
// synthetic generator's correlation map and the correlation matrix export.
enum class Field {
  kFriction,
  kConfidence,
  kWiperSpeed,
  kAmbientTemp,
  kSurfaceTemp,
  kDewpointTemp,
  kHumidity,
  kRainfall,
  kSnowfall,
  kWindspeed,
  kHistoryFriction,
};

std::string_view field_name(Field f);
std::optional<Field> parse_field(std::string_view name);
double field_value(const Measurement& m, Field f);
void set_field(Measurement& m, Field f, double v);

// Covariates the generator can correlate with friction.
const std::vector<Field>& covariate_fields();

// Throws ArgumentError naming the first violated invariant.
void validate(const Measurement& m);

struct LabelPolicy {
  double friction_threshold = 0.5;
  int min_confidence = 1;
};

// 0 = slippery (friction below threshold), 1 = high friction; ties map to 1.
int label(double friction, const LabelPolicy& policy);

/// Reads the measurement CSV, drops rows under `policy.min_confidence` and
/// returns the rest sorted by timestamp (stable). Throws ParseError with the
/// 1-based line number for malformed rows and EmptyDatasetError when nothing
/// survives the filter.
std::vector<Measurement> load_measurements(const std::filesystem::path& path,
                                           const LabelPolicy& policy);
std::vector<Measurement> read_measurements(std::istream& in, const LabelPolicy& policy);

void write_measurements(std::ostream& out, const std::vector<Measurement>& rows);
void save_measurements(const std::filesystem::path& path, const std::vector<Measurement>& rows);

std::string_view measurement_csv_header();

struct SynthConfig {
  std::size_t n_samples = 600;
  std::uint64_t seed = 1;
  double slippery_fraction = 0.5;
  // covariate name -> target correlation with the latent friction state
  std::map<std::string, double> feature_correlations;
  // optional covariate/covariate correlations; unspecified pairs are completed
  // as the product of their friction correlations
  std::map<std::pair<std::string, std::string>, double> pair_correlations;
  // standard deviation of additive noise on the friction reading
  double noise_scale = 0.0;

  double label_threshold = 0.5;
  double squash_gain = 2.0;
  std::string segment_id = "segment1";
  std::int64_t start_time = 1'600'000'000;
  double mean_gap_s = 1200.0;
  // e-folding time of the latent road state; sets how informative earlier
  // friction readings are
  double state_timescale_s = 6.0 * 3600.0;
  GeoPoint center{57.70, 11.97};
  double position_jitter_km = 1.5;
  double low_confidence_fraction = 0.05;
};

// Correlations used by the CLI defaults; Bayes error of the per-record task is
// roughly 0.15 with noise_scale 0.02.
std::map<std::string, double> default_feature_correlations();

struct SynthResult {
  std::vector<Measurement> measurements;
  std::size_t clipped = 0;  // friction readings clipped into [0,1]
  Eigen::MatrixXd correlation;  // repaired latent correlation, friction first
  std::vector<Field> fields;    // covariate order of `correlation` rows 1..
  double bayes_error = 0.0;     // quadrature estimate, see estimate_bayes_error
};

/// Draws a deterministic dataset: a latent Gaussian road state following an
/// AR(1) process in time, covariates jointly Gaussian with it, and friction
/// obtained by logistic squashing plus optional reading noise.
SynthResult synthesize(const SynthConfig& config);

/// Error of the optimal classifier that predicts label(friction) of a record
/// from the same record's latent covariates. Evaluated by 2-D quadrature.
double estimate_bayes_error(const SynthConfig& config);

// Completed and PSD-repaired latent correlation matrix (friction first).
Eigen::MatrixXd latent_correlation(const SynthConfig& config, std::vector<Field>* order = nullptr);

double normal_cdf(double x);
double normal_quantile(double p);

// Pearson correlation over pairs where both values are finite; NaN when fewer
// than two pairs or zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace frictionml
