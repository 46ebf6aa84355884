#include "frictionml/structuring.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "frictionml/csv.hpp"
#include "frictionml/error.hpp"

namespace frictionml {

void validate(const WindowSpec& spec) {
  if (spec.T <= 0) throw ArgumentError("window: T must be > 0");
  if (spec.f_s < 1) throw ArgumentError("window: f_s must be >= 1");
  if (spec.d() < 1) throw ArgumentError("window: at least one channel required");
  if (spec.horizon < 0) throw ArgumentError("window: horizon must be >= 0");
  if (spec.quantize_interval <= 0) throw ArgumentError("window: quantize_interval must be > 0");
  if (spec.quantize_interval > spec.T) throw ArgumentError("window: quantize_interval must be <= T");
  if (spec.history_span <= 0) throw ArgumentError("window: history_span must be > 0");
  if (!(spec.radius_km > 0.0)) throw ArgumentError("window: radius_km must be > 0");
}

std::size_t StructuredWindow::observed_count() const {
  return static_cast<std::size_t>(std::count(missing_mask.begin(), missing_mask.end(), false));
}

namespace {

double finite_mean(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  return n ? s / static_cast<double>(n) : kMissing;
}

// Median of finite values; an even count averages the middle pair and rounds
// half-up.
double ordinal_median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return kMissing;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  const double mid = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return std::floor(mid + 0.5);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

Measurement merge_interval(std::span<const Measurement> group, std::int64_t start) {
  Measurement out;
  out.timestamp = start;
  out.segment_id = group.front().segment_id;
  auto collect = [&](auto getter) {
    std::vector<double> v;
    v.reserve(group.size());
    for (const auto& m : group) v.push_back(getter(m));
    return v;
  };
  out.position.lat_deg = finite_mean(collect([](const Measurement& m) { return m.position.lat_deg; }));
  out.position.lon_deg = finite_mean(collect([](const Measurement& m) { return m.position.lon_deg; }));
  out.friction = finite_mean(collect([](const Measurement& m) { return m.friction; }));
  out.confidence = static_cast<int>(
      ordinal_median(collect([](const Measurement& m) { return static_cast<double>(m.confidence); })));
  out.wiper_speed = ordinal_median(collect([](const Measurement& m) { return m.wiper_speed; }));
  for (Field f : {Field::kAmbientTemp, Field::kSurfaceTemp, Field::kDewpointTemp, Field::kHumidity,
                  Field::kRainfall, Field::kSnowfall, Field::kWindspeed, Field::kHistoryFriction}) {
    set_field(out, f, finite_mean(collect([f](const Measurement& m) { return field_value(m, f); })));
  }
  return out;
}

}  // namespace

std::vector<Measurement> quantize(std::span<const Measurement> measurements, std::int64_t interval) {
  if (interval <= 0) throw ArgumentError("quantize: interval must be > 0");
  std::vector<Measurement> out;
  if (measurements.empty()) return out;

  // group by segment, keeping first-appearance order of segments
  std::vector<std::string> segments;
  for (const auto& m : measurements)
    if (std::find(segments.begin(), segments.end(), m.segment_id) == segments.end())
      segments.push_back(m.segment_id);

  for (const auto& seg : segments) {
    std::vector<Measurement> rows;
    for (const auto& m : measurements)
      if (m.segment_id == seg) rows.push_back(m);
    std::size_t i = 0;
    while (i < rows.size()) {
      const std::int64_t bucket = floor_div(rows[i].timestamp, interval);
      std::size_t j = i;
      while (j < rows.size() && floor_div(rows[j].timestamp, interval) == bucket) ++j;
      out.push_back(merge_interval(std::span<const Measurement>(rows).subspan(i, j - i), bucket * interval));
      i = j;
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Measurement& a, const Measurement& b) { return a.timestamp < b.timestamp; });
  return out;
}

StructuredWindow structure_window(std::span<const Measurement> stream, const WindowSpec& spec,
                                  std::int64_t t) {
  validate(spec);
  const auto d = static_cast<Eigen::Index>(spec.d());
  const auto fs = static_cast<Eigen::Index>(spec.f_s);
  StructuredWindow w;
  w.t = t;
  w.values = Eigen::MatrixXd::Constant(d, fs, kMissing);
  w.missing_mask.assign(spec.f_s, true);

  std::vector<const Measurement*> latest(spec.f_s, nullptr);
  const std::int64_t begin = t - spec.T;
  const auto first = std::upper_bound(stream.begin(), stream.end(), begin,
                                      [](std::int64_t v, const Measurement& m) { return v < m.timestamp; });
  for (auto it = first; it != stream.end() && it->timestamp <= t; ++it) {
    const std::int64_t offset = it->timestamp - begin;  // in (0, T]
    const auto slot = static_cast<std::size_t>((offset * static_cast<std::int64_t>(spec.f_s) - 1) / spec.T);
    latest[slot] = &*it;  // stream order: later records overwrite
  }
  for (std::size_t k = 0; k < spec.f_s; ++k) {
    if (!latest[k]) continue;
    bool complete = true;
    for (Eigen::Index r = 0; r < d; ++r) {
      const double v = field_value(*latest[k], spec.channels[static_cast<std::size_t>(r)]);
      complete = complete && std::isfinite(v);
      w.values(r, static_cast<Eigen::Index>(k)) = v;
    }
    if (complete) {
      w.missing_mask[k] = false;
    } else {
      w.values.col(static_cast<Eigen::Index>(k)).setConstant(kMissing);
    }
  }
  if (w.observed_count() == 0) throw EmptyWindowError("window ending at " + std::to_string(t) + " has no observed slot");
  return w;
}

std::vector<double> neighbor_weights(const std::vector<bool>& missing_mask, std::size_t tau) {
  const auto n = missing_mask.size();
  if (tau == 0 || tau + 1 >= n) return {};
  if (missing_mask[tau - 1] || missing_mask[tau + 1]) return {};
  std::vector<double> w(n, 0.0);
  w[tau - 1] = 0.5;
  w[tau + 1] = 0.5;
  return w;
}

std::vector<double> inverse_distance_weights(const std::vector<bool>& missing_mask, std::size_t tau) {
  const auto n = missing_mask.size();
  std::vector<double> w(n, 0.0);
  double total = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    if (missing_mask[m] || m == tau) continue;
    const double dist = m > tau ? static_cast<double>(m - tau) : static_cast<double>(tau - m);
    w[m] = 1.0 / dist;
    total += w[m];
  }
  if (total <= 0.0) throw ContractError("inverse_distance_weights: no observed column");
  for (auto& x : w) x /= total;
  return w;
}

namespace {

StructuredWindow impute_with(const StructuredWindow& window, bool neighbor_first) {
  if (window.observed_count() == 0) throw ContractError("impute: window has no observed column");
  StructuredWindow out = window;
  const auto n = window.missing_mask.size();
  for (std::size_t tau = 0; tau < n; ++tau) {
    if (!window.missing_mask[tau]) continue;
    std::vector<double> w;
    if (neighbor_first) w = neighbor_weights(window.missing_mask, tau);
    if (w.empty()) w = inverse_distance_weights(window.missing_mask, tau);
    Eigen::VectorXd col = Eigen::VectorXd::Zero(window.values.rows());
    for (std::size_t m = 0; m < n; ++m)
      if (w[m] != 0.0) col += w[m] * window.values.col(static_cast<Eigen::Index>(m));
    out.values.col(static_cast<Eigen::Index>(tau)) = col;
  }
  // weights only ever reference originally observed columns
  std::fill(out.missing_mask.begin(), out.missing_mask.end(), false);
  return out;
}

}  // namespace

StructuredWindow impute_neighbor(const StructuredWindow& window) { return impute_with(window, true); }

StructuredWindow impute_inverse_distance(const StructuredWindow& window) {
  return impute_with(window, false);
}

std::vector<double> vectorize(const StructuredWindow& window) {
  if (std::any_of(window.missing_mask.begin(), window.missing_mask.end(), [](bool b) { return b; }))
    throw ContractError("vectorize: window still has missing columns");
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(window.values.size()));
  for (Eigen::Index c = 0; c < window.values.cols(); ++c)
    for (Eigen::Index r = 0; r < window.values.rows(); ++r) z.push_back(window.values(r, c));
  return z;
}

std::vector<double> history_weights(std::span<const double> deltas_t, std::span<const double> deltas_d,
                                    const WindowSpec& spec) {
  if (deltas_t.size() != deltas_d.size()) throw ContractError("history_weights: length mismatch");
  std::vector<double> w(deltas_t.size());
  const double span = static_cast<double>(spec.history_span);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (deltas_t[i] < 0.0 || deltas_d[i] < 0.0) throw ContractError("history_weights: negative delta");
    w[i] = std::max(0.0, 1.0 - deltas_t[i] / span) * std::max(0.0, 1.0 - deltas_d[i] / spec.radius_km);
  }
  return w;
}

void attach_history(std::vector<Measurement>& stream, const WindowSpec& spec) {
  std::vector<double> dt, dd, fr;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    dt.clear();
    dd.clear();
    fr.clear();
    for (std::size_t j = i; j-- > 0;) {
      const auto lag = stream[i].timestamp - stream[j].timestamp;
      if (lag >= spec.history_span) break;
      if (lag <= 0 || stream[j].segment_id != stream[i].segment_id) continue;
      dt.push_back(static_cast<double>(lag));
      dd.push_back(haversine_km(stream[i].position, stream[j].position));
      fr.push_back(stream[j].friction);
    }
    const auto w = history_weights(dt, dd, spec);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      num += w[k] * fr[k];
      den += w[k];
    }
    stream[i].history_friction = den > 0.0 ? num / den : kMissing;
  }
}

NormStats fit_norm(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw ArgumentError("fit_norm: need at least 2 samples");
  NormStats s;
  const auto n = static_cast<double>(rows.rows());
  s.mean.resize(static_cast<std::size_t>(rows.cols()));
  s.std.resize(static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double mu = rows.col(j).sum() / n;
    const double var = (rows.col(j).array() - mu).square().sum() / n;
    s.mean[static_cast<std::size_t>(j)] = mu;
    s.std[static_cast<std::size_t>(j)] = std::sqrt(var);
    if (var == 0.0) s.zero_std.push_back(static_cast<std::size_t>(j));
  }
  return s;
}

NormStats fit_norm(std::span<const FeatureVector> samples) {
  if (samples.size() < 2) throw ArgumentError("fit_norm: need at least 2 samples");
  const auto dim = samples.front().z.size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].z.size() != dim) throw ContractError("fit_norm: ragged feature vectors");
    for (std::size_t j = 0; j < dim; ++j)
      rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[i].z[j];
  }
  return fit_norm(rows);
}

FeatureVector apply_norm(const FeatureVector& sample, const NormStats& stats) {
  if (sample.z.size() != stats.dim())
    throw ContractError("apply_norm: expected dimension " + std::to_string(stats.dim()) + ", got " +
                        std::to_string(sample.z.size()));
  FeatureVector out = sample;
  for (std::size_t j = 0; j < out.z.size(); ++j)
    out.z[j] = stats.std[j] > 0.0 ? (sample.z[j] - stats.mean[j]) / stats.std[j] : 0.0;
  return out;
}

Eigen::MatrixXd apply_norm(const Eigen::MatrixXd& rows, const NormStats& stats) {
  if (static_cast<std::size_t>(rows.cols()) != stats.dim()) throw ContractError("apply_norm: dimension mismatch");
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (stats.std[k] > 0.0)
      out.col(j) = (rows.col(j).array() - stats.mean[k]) / stats.std[k];
    else
      out.col(j).setZero();
  }
  return out;
}

void write_norm_csv(std::ostream& out, const NormStats& stats) {
  out << "mean";
  for (double v : stats.mean) out << ',' << csv::format_double(v);
  out << "\nstd";
  for (double v : stats.std) out << ',' << csv::format_double(v);
  out << '\n';
}

void write_feature_csv(std::ostream& out, std::span<const FeatureVector> samples) {
  out << "t,segment_id,label";
  const auto dim = samples.empty() ? 0 : samples.front().z.size();
  for (std::size_t j = 0; j < dim; ++j) out << ",z" << j;
  out << '\n';
  for (const auto& s : samples) {
    out << s.t << ',' << s.segment_id << ',' << s.label;
    for (double v : s.z) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

}  // namespace frictionml
