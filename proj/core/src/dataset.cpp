#include "frictionml/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

#include "frictionml/csv.hpp"
#include "frictionml/error.hpp"
#include "frictionml/pca.hpp"
#include "frictionml/rng.hpp"

namespace frictionml {

namespace {

constexpr double kEarthRadiusKm = 6371.0088;
constexpr double kPi = 3.141592653589793238462643;

constexpr std::array<std::pair<Field, std::string_view>, 11> kFieldNames{{
    {Field::kFriction, "friction"},
    {Field::kConfidence, "confidence"},
    {Field::kWiperSpeed, "wiper_speed"},
    {Field::kAmbientTemp, "ambient_temp"},
    {Field::kSurfaceTemp, "surface_temp"},
    {Field::kDewpointTemp, "dewpoint_temp"},
    {Field::kHumidity, "humidity"},
    {Field::kRainfall, "rainfall"},
    {Field::kSnowfall, "snowfall"},
    {Field::kWindspeed, "windspeed"},
    {Field::kHistoryFriction, "history_friction"},
}};

constexpr std::string_view kHeader =
    "timestamp,segment_id,lat,lon,friction,confidence,wiper_speed,ambient_temp,"
    "surface_temp,dewpoint_temp,humidity,rainfall,snowfall,windspeed";

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double to_rad = kPi / 180.0;
  const double dlat = (b.lat_deg - a.lat_deg) * to_rad;
  const double dlon = (b.lon_deg - a.lon_deg) * to_rad;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat_deg * to_rad) * std::cos(b.lat_deg * to_rad) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(s)));
}

std::string_view field_name(Field f) {
  for (const auto& [field, name] : kFieldNames)
    if (field == f) return name;
  return "unknown";
}

std::optional<Field> parse_field(std::string_view name) {
  for (const auto& [field, n] : kFieldNames)
    if (n == name) return field;
  return std::nullopt;
}

double field_value(const Measurement& m, Field f) {
  switch (f) {
    case Field::kFriction: return m.friction;
    case Field::kConfidence: return static_cast<double>(m.confidence);
    case Field::kWiperSpeed: return m.wiper_speed;
    case Field::kAmbientTemp: return m.ambient_temp;
    case Field::kSurfaceTemp: return m.surface_temp;
    case Field::kDewpointTemp: return m.dewpoint_temp;
    case Field::kHumidity: return m.humidity;
    case Field::kRainfall: return m.rainfall;
    case Field::kSnowfall: return m.snowfall;
    case Field::kWindspeed: return m.windspeed;
    case Field::kHistoryFriction: return m.history_friction;
  }
  return kMissing;
}

void set_field(Measurement& m, Field f, double v) {
  switch (f) {
    case Field::kFriction: m.friction = v; break;
    case Field::kConfidence: m.confidence = static_cast<int>(v); break;
    case Field::kWiperSpeed: m.wiper_speed = v; break;
    case Field::kAmbientTemp: m.ambient_temp = v; break;
    case Field::kSurfaceTemp: m.surface_temp = v; break;
    case Field::kDewpointTemp: m.dewpoint_temp = v; break;
    case Field::kHumidity: m.humidity = v; break;
    case Field::kRainfall: m.rainfall = v; break;
    case Field::kSnowfall: m.snowfall = v; break;
    case Field::kWindspeed: m.windspeed = v; break;
    case Field::kHistoryFriction: m.history_friction = v; break;
  }
}

const std::vector<Field>& covariate_fields() {
  static const std::vector<Field> fields{
      Field::kWiperSpeed, Field::kAmbientTemp, Field::kSurfaceTemp, Field::kDewpointTemp,
      Field::kHumidity,   Field::kRainfall,    Field::kSnowfall,    Field::kWindspeed,
  };
  return fields;
}

void validate(const Measurement& m) {
  auto fail = [](const std::string& what) { throw ArgumentError(what); };
  if (m.timestamp <= 0) fail("timestamp must be positive");
  if (!(m.friction >= 0.0 && m.friction <= 1.0)) fail("friction outside [0,1]");
  if (m.confidence < 0) fail("confidence must be >= 0");
  if (!std::isnan(m.wiper_speed) && (m.wiper_speed < 0.0 || m.wiper_speed != std::floor(m.wiper_speed)))
    fail("wiper_speed must be a non-negative integer");
  if (!std::isnan(m.humidity) && (m.humidity < 0.0 || m.humidity > 1.0)) fail("humidity outside [0,1]");
  if (!std::isnan(m.rainfall) && m.rainfall < 0.0) fail("rainfall must be >= 0");
  if (!std::isnan(m.snowfall) && m.snowfall < 0.0) fail("snowfall must be >= 0");
  if (!std::isnan(m.windspeed) && m.windspeed < 0.0) fail("windspeed must be >= 0");
  for (double t : {m.ambient_temp, m.surface_temp, m.dewpoint_temp})
    if (std::isinf(t)) fail("temperature must be finite");
}

int label(double friction, const LabelPolicy& policy) {
  return friction < policy.friction_threshold ? 0 : 1;
}

std::string_view measurement_csv_header() { return kHeader; }

std::vector<Measurement> read_measurements(std::istream& in, const LabelPolicy& policy) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw EmptyDatasetError("measurement file is empty");
  ++line_no;
  if (csv::trim(line) != kHeader) throw ParseError(line_no, "unexpected header");

  std::vector<Measurement> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(csv::trim(line));
    if (cells.size() != 14)
      throw ParseError(line_no, "expected 14 fields, got " + std::to_string(cells.size()));
    Measurement m;
    std::size_t col = 0;
    try {
      auto opt_num = [&](std::string_view s) {
        s = csv::trim(s);
        return s.empty() ? kMissing : csv::parse_double(s);
      };
      m.timestamp = csv::parse_int(cells[col++]);
      m.segment_id = std::string(csv::trim(cells[col++]));
      m.position.lat_deg = csv::parse_double(cells[col++]);
      m.position.lon_deg = csv::parse_double(cells[col++]);
      m.friction = csv::parse_double(cells[col++]);
      m.confidence = static_cast<int>(csv::parse_int(cells[col++]));
      m.wiper_speed = opt_num(cells[col++]);
      m.ambient_temp = opt_num(cells[col++]);
      m.surface_temp = opt_num(cells[col++]);
      m.dewpoint_temp = opt_num(cells[col++]);
      m.humidity = opt_num(cells[col++]);
      m.rainfall = opt_num(cells[col++]);
      m.snowfall = opt_num(cells[col++]);
      m.windspeed = opt_num(cells[col++]);
      validate(m);
    } catch (const ArgumentError& e) {
      throw ParseError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, "column " + std::to_string(col) + ": " + e.what());
    }
    if (m.confidence < policy.min_confidence) continue;
    rows.push_back(std::move(m));
  }
  if (rows.empty()) throw EmptyDatasetError("no measurements left after filtering");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Measurement& a, const Measurement& b) { return a.timestamp < b.timestamp; });
  return rows;
}

std::vector<Measurement> load_measurements(const std::filesystem::path& path,
                                           const LabelPolicy& policy) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_measurements(in, policy);
}

void write_measurements(std::ostream& out, const std::vector<Measurement>& rows) {
  out << kHeader << '\n';
  for (const auto& m : rows) {
    out << m.timestamp << ',' << m.segment_id << ',' << csv::format_double(m.position.lat_deg) << ','
        << csv::format_double(m.position.lon_deg) << ',' << csv::format_double(m.friction) << ','
        << m.confidence;
    for (double v : {m.wiper_speed, m.ambient_temp, m.surface_temp, m.dewpoint_temp, m.humidity,
                     m.rainfall, m.snowfall, m.windspeed})
      out << ',' << csv::format_double(v);
    out << '\n';
  }
}

void save_measurements(const std::filesystem::path& path, const std::vector<Measurement>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_measurements(out, rows);
  if (!out) throw IoError("write failed: " + path.string());
}

std::map<std::string, double> default_feature_correlations() {
  return {
      {"humidity", -0.65},    {"rainfall", -0.55},    {"snowfall", -0.45},
      {"surface_temp", 0.78}, {"ambient_temp", 0.55}, {"dewpoint_temp", 0.35},
      {"wiper_speed", -0.5},  {"windspeed", -0.2},
  };
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("normal_quantile: p must lie in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("pearson: length mismatch");
  double sa = 0, sb = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isfinite(a[i]) && std::isfinite(b[i])) {
      sa += a[i];
      sb += b[i];
      ++n;
    }
  }
  if (n < 2) return kMissing;
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isfinite(a[i]) && std::isfinite(b[i])) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
  }
  if (saa <= 0.0 || sbb <= 0.0) return kMissing;
  return sab / std::sqrt(saa * sbb);
}

namespace {

void check_config(const SynthConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError("synth: " + what); };
  if (c.n_samples == 0) fail("n_samples must be >= 1");
  if (!(c.slippery_fraction > 0.0 && c.slippery_fraction < 1.0)) fail("slippery_fraction must lie in (0,1)");
  if (!(c.noise_scale >= 0.0)) fail("noise_scale must be >= 0");
  if (!(c.label_threshold > 0.0 && c.label_threshold < 1.0)) fail("label_threshold must lie in (0,1)");
  if (!(c.squash_gain > 0.0)) fail("squash_gain must be > 0");
  if (!(c.mean_gap_s >= 1.0)) fail("mean_gap_s must be >= 1");
  if (!(c.state_timescale_s > 0.0)) fail("state_timescale_s must be > 0");
  if (!(c.low_confidence_fraction >= 0.0 && c.low_confidence_fraction < 1.0))
    fail("low_confidence_fraction must lie in [0,1)");
  if (c.start_time <= 0) fail("start_time must be positive");
}

struct LatentModel {
  Eigen::MatrixXd corr;           // (1+m)x(1+m), friction first
  std::vector<Field> fields;      // m covariates
  Eigen::VectorXd loading;        // covariate | state mean coefficients
  Eigen::MatrixXd residual_sqrt;  // m x m, residual covariance square root
  Eigen::VectorXd regression;     // state | covariates coefficients
  double posterior_sd = 1.0;      // sd of state given covariates
  double state_cut = 0.0;         // state value where friction == threshold
  double offset = 0.0;
};

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return m;
  const auto eig = eig_symmetric(0.5 * (m + m.transpose()));
  Eigen::VectorXd d = eig.values.unaryExpr([](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; });
  return eig.vectors * d.asDiagonal() * eig.vectors.transpose();
}

LatentModel build_latent(const SynthConfig& c) {
  LatentModel lm;
  lm.corr = latent_correlation(c, &lm.fields);
  const auto m = static_cast<Eigen::Index>(lm.fields.size());
  lm.loading = lm.corr.block(1, 0, m, 1);
  const Eigen::MatrixXd cxx = lm.corr.block(1, 1, m, m);
  lm.residual_sqrt = psd_sqrt(cxx - lm.loading * lm.loading.transpose());

  if (m > 0) {
    // pseudo-inverse through the symmetric eigensolver (cxx may be singular)
    const auto eig = eig_symmetric(cxx);
    Eigen::VectorXd inv = eig.values.unaryExpr([](double x) { return x > 1e-10 ? 1.0 / x : 0.0; });
    const Eigen::MatrixXd pinv = eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
    lm.regression = pinv * lm.loading;
    const double r2 = std::clamp(lm.loading.dot(lm.regression), 0.0, 1.0);
    lm.posterior_sd = std::sqrt(1.0 - r2);
  } else {
    lm.regression.resize(0);
    lm.posterior_sd = 1.0;
  }
  lm.state_cut = normal_quantile(c.slippery_fraction);
  const double logit_thr = std::log(c.label_threshold / (1.0 - c.label_threshold));
  lm.offset = logit_thr - c.squash_gain * lm.state_cut;
  return lm;
}

double physical_value(Field f, double z) {
  switch (f) {
    case Field::kWiperSpeed: {
      if (z < 0.0) return 0.0;
      if (z < 0.8) return 1.0;
      if (z < 1.5) return 2.0;
      return 3.0;
    }
    case Field::kAmbientTemp: return 1.0 + 5.0 * z;
    case Field::kSurfaceTemp: return 0.5 + 6.0 * z;
    case Field::kDewpointTemp: return -2.0 + 4.0 * z;
    case Field::kHumidity: return sigmoid(0.9 * z + 0.8);
    case Field::kRainfall: return 1.2 * softplus(1.5 * z - 0.5);
    case Field::kSnowfall: return 0.8 * softplus(1.5 * z - 1.0);
    case Field::kWindspeed: return 2.0 * softplus(z + 1.0);
    default: return z;
  }
}

}  // namespace

Eigen::MatrixXd latent_correlation(const SynthConfig& config, std::vector<Field>* order) {
  std::vector<Field> fields;
  std::vector<double> r;
  for (const auto& [name, value] : config.feature_correlations) {
    const auto f = parse_field(name);
    const auto& cov = covariate_fields();
    if (!f || std::find(cov.begin(), cov.end(), *f) == cov.end())
      throw ConfigError("synth: unknown covariate '" + name + "'");
    if (!(value >= -1.0 && value <= 1.0))
      throw ConfigError("synth: correlation for '" + name + "' outside [-1,1]");
    fields.push_back(*f);
    r.push_back(value);
  }
  const auto m = static_cast<Eigen::Index>(fields.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(m + 1, m + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    c(0, i + 1) = c(i + 1, 0) = r[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < m; ++j)
      c(i + 1, j + 1) = c(j + 1, i + 1) = r[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(j)];
  }
  auto index_of = [&](const std::string& name) -> Eigen::Index {
    const auto f = parse_field(name);
    for (std::size_t i = 0; i < fields.size(); ++i)
      if (f && fields[i] == *f) return static_cast<Eigen::Index>(i) + 1;
    throw ConfigError("synth: pair correlation names a covariate without a friction correlation: " + name);
  };
  for (const auto& [pair, value] : config.pair_correlations) {
    if (!(value >= -1.0 && value <= 1.0)) throw ConfigError("synth: pair correlation outside [-1,1]");
    const auto i = index_of(pair.first);
    const auto j = index_of(pair.second);
    if (i == j) throw ConfigError("synth: pair correlation of a covariate with itself");
    c(i, j) = c(j, i) = value;
  }

  // Nearest-PSD repair by clipping eigenvalues at zero, then rescale to a
  // unit diagonal. Refuse when the repair moves any entry noticeably.
  const auto eig = eig_symmetric(c);
  if (eig.values.minCoeff() < -1e-12) {
    Eigen::VectorXd clipped = eig.values.unaryExpr([](double x) { return x > 0.0 ? x : 0.0; });
    Eigen::MatrixXd repaired = eig.vectors * clipped.asDiagonal() * eig.vectors.transpose();
    const Eigen::VectorXd d = repaired.diagonal().cwiseSqrt();
    if (d.minCoeff() <= 0.0) throw ConfigError("synth: correlation matrix is infeasible");
    repaired = d.cwiseInverse().asDiagonal() * repaired * d.cwiseInverse().asDiagonal();
    const double moved = (repaired - c).cwiseAbs().maxCoeff();
    if (moved > 0.05)
      throw ConfigError("synth: correlation matrix is not positive semidefinite (repair would move entries by " +
                        csv::format_fixed(moved, 3) + ")");
    c = 0.5 * (repaired + repaired.transpose());
  }
  if (order) *order = fields;
  return c;
}

SynthResult synthesize(const SynthConfig& config) {
  check_config(config);
  const LatentModel lm = build_latent(config);
  const auto m = static_cast<Eigen::Index>(lm.fields.size());
  const auto& all_cov = covariate_fields();

  Rng rng(derive_seed(config.seed, {0x5e9ULL}));
  SynthResult out;
  out.correlation = lm.corr;
  out.fields = lm.fields;
  out.measurements.reserve(config.n_samples);

  double state = standard_normal(rng);
  std::int64_t t = config.start_time;
  const double jitter_deg_lat = config.position_jitter_km / 111.32;
  const double jitter_deg_lon =
      config.position_jitter_km / (111.32 * std::cos(config.center.lat_deg * kPi / 180.0));

  Eigen::VectorXd e(m);
  for (std::size_t i = 0; i < config.n_samples; ++i) {
    if (i > 0) {
      const double gap = -config.mean_gap_s * std::log(1.0 - uniform01(rng));
      const auto step = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(gap)));
      t += step;
      const double rho = std::exp(-static_cast<double>(step) / config.state_timescale_s);
      state = rho * state + std::sqrt(1.0 - rho * rho) * standard_normal(rng);
    }
    for (Eigen::Index k = 0; k < m; ++k) e(k) = standard_normal(rng);
    const Eigen::VectorXd latent_x = lm.loading * state + lm.residual_sqrt * e;

    Measurement meas;
    meas.timestamp = t;
    meas.segment_id = config.segment_id;
    // uniform point in a disk around the segment centre
    const double rad = std::sqrt(uniform01(rng));
    const double ang = 2.0 * kPi * uniform01(rng);
    meas.position.lat_deg = config.center.lat_deg + jitter_deg_lat * rad * std::sin(ang);
    meas.position.lon_deg = config.center.lon_deg + jitter_deg_lon * rad * std::cos(ang);

    double friction = sigmoid(config.squash_gain * state + lm.offset);
    if (config.noise_scale > 0.0) friction += config.noise_scale * standard_normal(rng);
    if (friction < 0.0 || friction > 1.0) {
      friction = std::clamp(friction, 0.0, 1.0);
      ++out.clipped;
    }
    meas.friction = friction;

    meas.confidence = uniform01(rng) < config.low_confidence_fraction
                          ? 0
                          : 1 + static_cast<int>(uniform_index(rng, 3));

    // covariates absent from the correlation map are independent noise
    for (Field f : all_cov) {
      const auto it = std::find(lm.fields.begin(), lm.fields.end(), f);
      const double z = it != lm.fields.end() ? latent_x(it - lm.fields.begin()) : standard_normal(rng);
      set_field(meas, f, physical_value(f, z));
    }
    out.measurements.push_back(std::move(meas));
  }
  out.bayes_error = estimate_bayes_error(config);
  return out;
}

double estimate_bayes_error(const SynthConfig& config) {
  check_config(config);
  const LatentModel lm = build_latent(config);
  const double explained_sd = std::sqrt(std::max(0.0, 1.0 - lm.posterior_sd * lm.posterior_sd));
  const double thr = config.label_threshold;

  // Probability that the record is slippery given the posterior mean mu of
  // the latent state.
  auto p_slippery = [&](double mu) {
    if (lm.posterior_sd < 1e-12) {
      const double f = sigmoid(config.squash_gain * mu + lm.offset);
      return config.noise_scale > 0.0 ? normal_cdf((thr - f) / config.noise_scale) : (f < thr ? 1.0 : 0.0);
    }
    if (config.noise_scale <= 0.0) return normal_cdf((lm.state_cut - mu) / lm.posterior_sd);
    constexpr int kNodes = 400;
    constexpr double kSpan = 8.0;
    const double h = 2.0 * kSpan / kNodes;
    double acc = 0.0;
    double wsum = 0.0;
    for (int k = 0; k <= kNodes; ++k) {
      const double z = -kSpan + h * k;
      const double w = std::exp(-0.5 * z * z) * ((k == 0 || k == kNodes) ? 0.5 : 1.0);
      const double f = sigmoid(config.squash_gain * (mu + lm.posterior_sd * z) + lm.offset);
      acc += w * normal_cdf((thr - f) / config.noise_scale);
      wsum += w;
    }
    return acc / wsum;
  };

  if (explained_sd < 1e-12) {
    const double p = p_slippery(0.0);
    return std::min(p, 1.0 - p);
  }
  constexpr int kNodes = 800;
  constexpr double kSpan = 8.0;
  const double h = 2.0 * kSpan / kNodes;
  double acc = 0.0;
  double wsum = 0.0;
  for (int k = 0; k <= kNodes; ++k) {
    const double u = -kSpan + h * k;
    const double w = std::exp(-0.5 * u * u) * ((k == 0 || k == kNodes) ? 0.5 : 1.0);
    const double p = p_slippery(explained_sd * u);
    acc += w * std::min(p, 1.0 - p);
    wsum += w;
  }
  return acc / wsum;
}

}  // namespace frictionml
