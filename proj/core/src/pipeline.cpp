#include "frictionml/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "frictionml/csv.hpp"
#include "frictionml/error.hpp"
#include "frictionml/rng.hpp"

namespace frictionml {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (csv::trim(s).empty()) return out;
  for (auto part : csv::split(s)) out.emplace_back(csv::trim(part));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return csv::parse_double(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    return csv::parse_int(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 0) throw ConfigError(key + ": must be >= 0");
  return static_cast<std::size_t>(n);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto t = csv::trim(v);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string fmt(double v) { return csv::format_double(v); }

std::string fmt_list(const std::vector<double>& v) {
  std::vector<std::string> parts;
  for (double x : v) parts.push_back(fmt(x));
  return csv::join(parts);
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split_list(v)) out.push_back(to_double(key, p));
  return out;
}

template <class F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct KeyEntry {
  std::string name;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = [] {
    std::vector<KeyEntry> t;
    auto add = [&](std::string name, std::string doc, std::function<std::string(const RunConfig&)> get,
                   std::function<void(RunConfig&, const std::string&)> set) {
      t.push_back({std::move(name), std::move(doc), std::move(get), std::move(set)});
    };
#define FML_DOUBLE(key, doc, field)                                           \
  add(key, doc, [](const RunConfig& c) { return fmt(c.field); },              \
      [](RunConfig& c, const std::string& v) { c.field = to_double(key, v); })
#define FML_COUNT(key, doc, field)                                            \
  add(key, doc, [](const RunConfig& c) { return std::to_string(c.field); },   \
      [](RunConfig& c, const std::string& v) { c.field = to_count(key, v); })
#define FML_INT(key, doc, field)                                              \
  add(key, doc, [](const RunConfig& c) { return std::to_string(c.field); },   \
      [](RunConfig& c, const std::string& v) { c.field = to_int(key, v); })

    add("seed", "global seed; every stochastic step derives from it",
        [](const RunConfig& c) { return std::to_string(c.seed); },
        [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); });
    add("data", "measurement CSV path; empty synthesizes from synth.*", [](const RunConfig& c) { return c.data; },
        [](RunConfig& c, const std::string& v) { c.data = v; });
    FML_COUNT("synth.segments", "number of independently seeded synthetic segments", segments);
    FML_COUNT("synth.n_samples", "records per synthetic segment", synth.n_samples);
    FML_DOUBLE("synth.slippery_fraction", "marginal share of slippery records", synth.slippery_fraction);
    FML_DOUBLE("synth.noise_scale", "std of additive friction reading noise", synth.noise_scale);
    FML_DOUBLE("synth.squash_gain", "gain of the logistic state-to-friction map", synth.squash_gain);
    FML_DOUBLE("synth.mean_gap_s", "mean gap between records, seconds", synth.mean_gap_s);
    FML_DOUBLE("synth.state_timescale_s", "e-folding time of the latent road state", synth.state_timescale_s);
    FML_DOUBLE("synth.position_jitter_km", "radius of record positions around the segment centre",
               synth.position_jitter_km);
    FML_DOUBLE("synth.low_confidence_fraction", "share of records with confidence 0",
               synth.low_confidence_fraction);
    FML_INT("synth.start_time", "timestamp of the first record", synth.start_time);
    add("synth.correlations", "covariate:correlation pairs with the latent state",
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (const auto& [k, v] : c.synth.feature_correlations) parts.push_back(k + ":" + fmt(v));
          return csv::join(parts);
        },
        [](RunConfig& c, const std::string& v) {
          std::map<std::string, double> m;
          for (const auto& p : split_list(v)) {
            const auto colon = p.find(':');
            if (colon == std::string::npos) throw ConfigError("synth.correlations: expected name:value, got '" + p + "'");
            const std::string name = p.substr(0, colon);
            if (!parse_field(name)) throw ConfigError("synth.correlations: unknown field '" + name + "'");
            m[name] = to_double("synth.correlations", p.substr(colon + 1));
          }
          c.synth.feature_correlations = std::move(m);
        });
    add("synth.pair_correlations", "a/b:correlation overrides between covariates",
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (const auto& [k, v] : c.synth.pair_correlations) parts.push_back(k.first + "/" + k.second + ":" + fmt(v));
          return csv::join(parts);
        },
        [](RunConfig& c, const std::string& v) {
          std::map<std::pair<std::string, std::string>, double> m;
          for (const auto& p : split_list(v)) {
            const auto slash = p.find('/');
            const auto colon = p.find(':');
            if (slash == std::string::npos || colon == std::string::npos || colon < slash)
              throw ConfigError("synth.pair_correlations: expected a/b:value, got '" + p + "'");
            m[{p.substr(0, slash), p.substr(slash + 1, colon - slash - 1)}] =
                to_double("synth.pair_correlations", p.substr(colon + 1));
          }
          c.synth.pair_correlations = std::move(m);
        });
    add("label.threshold", "friction below this is slippery (also used by the generator)",
        [](const RunConfig& c) { return fmt(c.label.friction_threshold); },
        [](RunConfig& c, const std::string& v) {
          c.label.friction_threshold = to_double("label.threshold", v);
          c.synth.label_threshold = c.label.friction_threshold;
        });
    FML_INT("label.min_confidence", "records below this confidence are dropped", label.min_confidence);
    FML_INT("window.T", "window length, seconds", window.T);
    FML_COUNT("window.f_s", "columns per window", window.f_s);
    add("window.channels", "measurement fields forming the window rows",
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (Field f : c.window.channels) parts.emplace_back(field_name(f));
          return csv::join(parts);
        },
        [](RunConfig& c, const std::string& v) {
          std::vector<Field> ch;
          for (const auto& p : split_list(v)) {
            const auto f = parse_field(p);
            if (!f) throw ConfigError("window.channels: unknown field '" + p + "'");
            ch.push_back(*f);
          }
          c.window.channels = std::move(ch);
        });
    FML_INT("window.quantize_interval", "quantization interval, seconds", window.quantize_interval);
    FML_INT("window.history_span", "lookback of the weighted friction history, seconds", window.history_span);
    FML_DOUBLE("window.radius_km", "spatial cut-off of the friction history", window.radius_km);
    add("horizon_mode", "label_lookahead | shift_window",
        [](const RunConfig& c) {
          return std::string(c.horizon_mode == HorizonMode::kLabelLookahead ? "label_lookahead" : "shift_window");
        },
        [](RunConfig& c, const std::string& v) {
          if (v == "label_lookahead")
            c.horizon_mode = HorizonMode::kLabelLookahead;
          else if (v == "shift_window")
            c.horizon_mode = HorizonMode::kShiftWindow;
          else
            throw ConfigError("horizon_mode: expected label_lookahead or shift_window");
        });
    add("impute", "neighbor | inverse_distance",
        [](const RunConfig& c) {
          return std::string(c.impute == ImputeScheme::kNeighbor ? "neighbor" : "inverse_distance");
        },
        [](RunConfig& c, const std::string& v) {
          if (v == "neighbor")
            c.impute = ImputeScheme::kNeighbor;
          else if (v == "inverse_distance")
            c.impute = ImputeScheme::kInverseDistance;
          else
            throw ConfigError("impute: expected neighbor or inverse_distance");
        });
    add("pca", "keep:<n> or variance:<fraction>; applied for LR and SVM",
        [](const RunConfig& c) {
          if (const auto* k = std::get_if<KeepCount>(&c.pca)) return "keep:" + std::to_string(k->n_keep);
          return "variance:" + fmt(std::get<VarianceFraction>(c.pca).fraction);
        },
        [](RunConfig& c, const std::string& v) {
          if (v.rfind("keep:", 0) == 0) {
            const auto n = to_count("pca", v.substr(5));
            if (n == 0) throw ConfigError("pca: keep count must be >= 1");
            c.pca = KeepCount{n};
          } else if (v.rfind("variance:", 0) == 0) {
            const double f = to_double("pca", v.substr(9));
            if (!(f > 0.0 && f <= 1.0)) throw ConfigError("pca: variance fraction must lie in (0,1]");
            c.pca = VarianceFraction{f};
          } else {
            throw ConfigError("pca: expected keep:<n> or variance:<fraction>");
          }
        });
    add("pca.for_ann", "also apply PCA before the neural network",
        [](const RunConfig& c) { return std::string(c.pca_for_ann ? "true" : "false"); },
        [](RunConfig& c, const std::string& v) { c.pca_for_ann = to_bool("pca.for_ann", v); });
    add("classifiers", "classifiers to run: LR, SVM, ANN, CONST",
        [](const RunConfig& c) { return csv::join(c.classifiers); },
        [](RunConfig& c, const std::string& v) {
          auto list = split_list(v);
          for (const auto& id : list)
            if (id != "LR" && id != "SVM" && id != "ANN" && id != "CONST")
              throw ConfigError("classifiers: unknown classifier '" + id + "'");
          c.classifiers = std::move(list);
        });
    add("horizons_min", "prediction horizons, minutes", [](const RunConfig& c) { return fmt_list(c.horizons_min); },
        [](RunConfig& c, const std::string& v) {
          auto list = to_double_list("horizons_min", v);
          for (double h : list)
            if (!(h >= 0.0)) throw ConfigError("horizons_min: horizons must be >= 0");
          c.horizons_min = std::move(list);
        });
    FML_COUNT("cv.k", "folds", cv.k);
    FML_COUNT("cv.repeats", "independent repeats averaged per cell", cv.repeats);
    FML_COUNT("cv.threads", "worker threads for folds; 0 = hardware concurrency", cv.threads);
    FML_DOUBLE("logreg.ridge", "ridge added to the IRLS Hessian", logreg.irls.ridge);
    FML_COUNT("logreg.max_iter", "IRLS iteration cap", logreg.irls.max_iter);
    FML_DOUBLE("logreg.tol", "IRLS stop tolerance on max |step|", logreg.irls.tol);
    add("svm.c_grid", "box constraints tried by the SVM grid", [](const RunConfig& c) { return fmt_list(c.svm_c_grid); },
        [](RunConfig& c, const std::string& v) { c.svm_c_grid = to_double_list("svm.c_grid", v); });
    add("svm.sigma_grid", "RBF widths tried, as multiples of the median pairwise distance",
        [](const RunConfig& c) { return fmt_list(c.svm_sigma_grid); },
        [](RunConfig& c, const std::string& v) { c.svm_sigma_grid = to_double_list("svm.sigma_grid", v); });
    FML_COUNT("svm.grid_repeats", "CV repeats used while selecting the grid cell", svm_grid_repeats);
    FML_DOUBLE("svm.tol", "SMO KKT tolerance", svm.tol);
    FML_COUNT("svm.max_passes", "SMO sweeps without change before stopping", svm.max_passes);
    add("ann.hidden", "hidden layer widths; empty = ann.layers layers as wide as the input",
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (auto w : c.ann.hidden_widths) parts.push_back(std::to_string(w));
          return csv::join(parts);
        },
        [](RunConfig& c, const std::string& v) {
          std::vector<std::size_t> w;
          for (const auto& p : split_list(v)) w.push_back(to_count("ann.hidden", p));
          c.ann.hidden_widths = std::move(w);
        });
    FML_COUNT("ann.layers", "hidden layer count when ann.hidden is empty", ann_layers);
    add("ann.hidden_activation", "threshold|sigmoid|tanh|relu|softplus|signum|linear",
        [](const RunConfig& c) { return activation_name(c.ann.hidden); },
        [](RunConfig& c, const std::string& v) { c.ann.hidden = parse_activation(v); });
    add("ann.output_activation", "activation of the output layer",
        [](const RunConfig& c) { return activation_name(c.ann.output); },
        [](RunConfig& c, const std::string& v) { c.ann.output = parse_activation(v); });
    add("ann.cost", "sse | bce | softmax_ce_logits", [](const RunConfig& c) { return cost_name(c.ann.cost.kind); },
        [](RunConfig& c, const std::string& v) { c.ann.cost.kind = parse_cost(v); });
    add("ann.optimizer", "gd | sgd | momentum | adam",
        [](const RunConfig& c) { return optimizer_name(c.ann.optimizer.kind); },
        [](RunConfig& c, const std::string& v) { c.ann.optimizer.kind = parse_optimizer(v); });
    FML_DOUBLE("ann.eta", "learning rate", ann.optimizer.eta);
    FML_DOUBLE("ann.alpha", "momentum coefficient", ann.optimizer.alpha);
    FML_DOUBLE("ann.gamma1", "Adam first-moment decay", ann.optimizer.gamma1);
    FML_DOUBLE("ann.gamma2", "Adam second-moment decay", ann.optimizer.gamma2);
    FML_DOUBLE("ann.epsilon", "Adam denominator offset", ann.optimizer.epsilon);
    FML_COUNT("ann.batch_size", "mini-batch size", ann.optimizer.batch_size);
    FML_COUNT("ann.epochs", "epoch cap", ann.fit.epochs);
    FML_COUNT("ann.patience", "epochs without validation improvement before stopping; 0 disables", ann.fit.patience);
    FML_DOUBLE("ann.threshold", "output threshold for the single-output network", ann.fit.threshold);
    FML_DOUBLE("ann.val_fraction", "share of the training fold held out for checkpointing", ann.val_fraction);
    FML_DOUBLE("sne.perplexity", "effective neighbour count", sne.perplexity);
    FML_COUNT("sne.n_iter", "gradient iterations", sne.n_iter);
    FML_DOUBLE("sne.eta", "SNE learning rate", sne.eta);
    FML_COUNT("embed.max_points", "samples embedded per segment (evenly strided)", embed_max_points);
    add("sweep.key", "config key varied by the sweep command", [](const RunConfig& c) { return c.sweep_key; },
        [](RunConfig& c, const std::string& v) {
          const auto keys = config_keys();
          if (std::find(keys.begin(), keys.end(), v) == keys.end() || v.rfind("sweep.", 0) == 0)
            throw ConfigError("sweep.key: '" + v + "' is not a sweepable key");
          c.sweep_key = v;
        });
    add("sweep.values", "';'-separated values assigned to sweep.key, in order",
        [](const RunConfig& c) {
          std::string out;
          for (std::size_t i = 0; i < c.sweep_values.size(); ++i) out += (i ? ";" : "") + c.sweep_values[i];
          return out;
        },
        [](RunConfig& c, const std::string& v) {
          // ';' separates values so list-valued keys can be swept
          std::vector<std::string> out;
          std::string cur;
          std::istringstream in(v);
          while (std::getline(in, cur, ';')) out.emplace_back(csv::trim(cur));
          c.sweep_values = std::move(out);
        });
    add("sweep.classifier", "classifier evaluated by the sweep", [](const RunConfig& c) { return c.sweep_classifier; },
        [](RunConfig& c, const std::string& v) {
          if (v != "LR" && v != "SVM" && v != "ANN" && v != "CONST")
            throw ConfigError("sweep.classifier: unknown classifier '" + v + "'");
          c.sweep_classifier = v;
        });
    FML_DOUBLE("sweep.horizon_min", "horizon used by the sweep, minutes", sweep_horizon_min);
#undef FML_DOUBLE
#undef FML_COUNT
#undef FML_INT
    return t;
  }();
  return table;
}

const KeyEntry& find_key(const std::string& key) {
  for (const auto& e : key_table())
    if (e.name == key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() {
  synth.feature_correlations = default_feature_correlations();
  synth.noise_scale = 0.02;
  window.channels = {Field::kFriction, Field::kHistoryFriction, Field::kSurfaceTemp, Field::kHumidity,
                     Field::kWiperSpeed};
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : key_table()) out.push_back(e.name);
  return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& entry = find_key(key);
  wrap(key, [&] {
    entry.set(config, value);
    return 0;
  });
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return find_key(key).get(config); }

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_config_value(config, std::string(csv::trim(assignment.substr(0, eq))),
                   std::string(csv::trim(assignment.substr(eq + 1))));
}

void apply_config_text(RunConfig& config, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = csv::trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      apply_override(config, std::string(t));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  RunConfig config;
  apply_config_text(config, in);
  return config;
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& e : key_table()) out << e.name << '=' << e.get(config) << '\n';
}

void describe_config(std::ostream& out) {
  const RunConfig defaults;
  for (const auto& e : key_table()) out << e.name << '=' << e.get(defaults) << "\n    " << e.doc << '\n';
}

std::vector<SegmentData> synthesize_segments(const RunConfig& config, std::vector<SynthResult>* raw) {
  if (config.segments == 0) throw ConfigError("synth.segments must be >= 1");
  std::vector<SegmentData> out;
  for (std::size_t s = 0; s < config.segments; ++s) {
    SynthConfig sc = config.synth;
    sc.seed = derive_seed(config.seed, {0x5e6ULL, s});
    sc.segment_id = "segment" + std::to_string(s + 1);
    // non-overlapping areas, about 11 km apart
    sc.center.lat_deg += 0.1 * static_cast<double>(s);
    SynthResult r = synthesize(sc);
    SegmentData seg;
    seg.segment_id = sc.segment_id;
    seg.bayes_error = r.bayes_error;
    for (const auto& m : r.measurements)
      if (m.confidence >= config.label.min_confidence) seg.measurements.push_back(m);
    if (seg.measurements.empty()) throw EmptyDatasetError("segment " + seg.segment_id + " has no usable records");
    out.push_back(std::move(seg));
    if (raw) raw->push_back(std::move(r));
  }
  return out;
}

std::vector<SegmentData> load_segments(const RunConfig& config) {
  if (config.data.empty()) return synthesize_segments(config);
  const auto rows = load_measurements(config.data, config.label);
  std::vector<SegmentData> out;
  for (const auto& m : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SegmentData& s) { return s.segment_id == m.segment_id; });
    if (it == out.end()) {
      out.push_back({m.segment_id, {}, std::numeric_limits<double>::quiet_NaN()});
      it = std::prev(out.end());
    }
    it->measurements.push_back(m);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SegmentData& a, const SegmentData& b) { return a.segment_id < b.segment_id; });
  return out;
}

void validate_config(const RunConfig& config) {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  try {
    validate(config.window);
  } catch (const ArgumentError& e) {
    fail(e.what());
  }
  if (config.data.empty()) {
    if (config.segments == 0) fail("synth.segments must be >= 1");
    latent_correlation(config.synth);
  }
  if (!(config.label.friction_threshold > 0.0 && config.label.friction_threshold < 1.0))
    fail("label.threshold must lie in (0,1)");
  if (config.cv.k < 2) fail("cv.k must be >= 2");
  if (config.cv.repeats < 1) fail("cv.repeats must be >= 1");
  for (double h : config.horizons_min)
    if (!(h >= 0.0)) fail("horizons_min entries must be >= 0");
  if (config.svm_c_grid.empty() || config.svm_sigma_grid.empty()) fail("svm grids must not be empty");
  for (double v : config.svm_c_grid)
    if (!(v > 0.0)) fail("svm.c_grid entries must be > 0");
  for (double v : config.svm_sigma_grid)
    if (!(v > 0.0)) fail("svm.sigma_grid entries must be > 0");
  if (!(config.ann.val_fraction >= 0.0 && config.ann.val_fraction < 1.0)) fail("ann.val_fraction must lie in [0,1)");
  if (config.embed_max_points < 3) fail("embed.max_points must be >= 3");
  if (!(config.sweep_horizon_min >= 0.0)) fail("sweep.horizon_min must be >= 0");
}

std::int64_t window_offset(const WindowSpec& spec, HorizonMode mode) {
  if (spec.horizon < 0) throw ArgumentError("horizon must be >= 0");
  if (mode == HorizonMode::kLabelLookahead) return spec.horizon;
  return (spec.horizon + spec.T - 1) / spec.T * spec.T;
}

std::vector<FeatureVector> build_samples(std::span<const Measurement> measurements, const WindowSpec& spec,
                                         const LabelPolicy& policy, HorizonMode mode, ImputeScheme impute) {
  validate(spec);
  std::vector<Measurement> q = quantize(measurements, spec.quantize_interval);
  attach_history(q, spec);
  const std::int64_t offset = window_offset(spec, mode);

  std::vector<std::string> segments;
  for (const auto& m : q)
    if (std::find(segments.begin(), segments.end(), m.segment_id) == segments.end()) segments.push_back(m.segment_id);

  std::vector<FeatureVector> out;
  for (const auto& seg : segments) {
    std::vector<Measurement> stream;
    for (const auto& m : q)
      if (m.segment_id == seg) stream.push_back(m);
    for (const auto& rec : stream) {
      const std::int64_t end = rec.timestamp - offset;
      // a quantized record is visible only once its whole interval has passed
      // the window end, whatever the horizon
      const std::int64_t last_start = end - spec.quantize_interval;
      const auto stop = std::upper_bound(stream.begin(), stream.end(), last_start,
                                         [](std::int64_t v, const Measurement& m) { return v < m.timestamp; });
      const std::span<const Measurement> visible(stream.data(), static_cast<std::size_t>(stop - stream.begin()));
      StructuredWindow w;
      try {
        w = structure_window(visible, spec, end);
      } catch (const EmptyWindowError&) {
        continue;
      }
      w = impute == ImputeScheme::kNeighbor ? impute_neighbor(w) : impute_inverse_distance(w);
      FeatureVector fv;
      fv.z = vectorize(w);
      fv.label = label(rec.friction, policy);
      fv.t = rec.timestamp;
      fv.segment_id = seg;
      out.push_back(std::move(fv));
    }
  }
  return out;
}

LabeledData to_labeled(std::span<const FeatureVector> samples) {
  LabeledData d;
  if (samples.empty()) return d;
  const auto dim = static_cast<Eigen::Index>(samples.front().z.size());
  d.x.resize(static_cast<Eigen::Index>(samples.size()), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<Eigen::Index>(samples[i].z.size()) != dim) throw ContractError("to_labeled: ragged samples");
    for (Eigen::Index j = 0; j < dim; ++j) d.x(static_cast<Eigen::Index>(i), j) = samples[i].z[static_cast<std::size_t>(j)];
    d.y.push_back(samples[i].label);
  }
  return d;
}

ClassifierConfig classifier_config(const RunConfig& config, const std::string& id) {
  ClassifierConfig c;
  c.id = id;
  if (id == "LR") {
    c.model = config.logreg;
    c.pca = config.pca;
  } else if (id == "SVM") {
    c.model = config.svm;
    c.pca = config.pca;
  } else if (id == "ANN") {
    MlpSpec spec = config.ann;
    if (spec.hidden_widths.empty() && config.ann_layers == 0) throw ConfigError("ann.layers must be >= 1");
    c.model = spec;
    if (config.pca_for_ann) c.pca = config.pca;
  } else if (id == "CONST") {
    c.model = ConstantSpec{};
  } else {
    throw ConfigError("unknown classifier '" + id + "'");
  }
  return c;
}

namespace {

// Hidden widths equal to the network input, which depends on the PCA step.
void resolve_ann_widths(ClassifierConfig& c, const RunConfig& config, std::size_t input_dim) {
  auto* spec = std::get_if<MlpSpec>(&c.model);
  if (!spec || !spec->hidden_widths.empty()) return;
  std::size_t width = input_dim;
  if (c.pca) {
    if (const auto* k = std::get_if<KeepCount>(&*c.pca)) width = std::min(width, k->n_keep);
    else return;  // variance policy: width resolved per fold by train_fold
  }
  spec->hidden_widths.assign(config.ann_layers, width);
}

}  // namespace

CellResult run_cell(const LabeledData& data, const RunConfig& config, const std::string& classifier,
                    double horizon_min) {
  CellResult cell;
  cell.classifier = classifier;
  cell.horizon_min = horizon_min;
  try {
    if (data.size() < config.cv.k)
      throw InsufficientDataError("only " + std::to_string(data.size()) + " samples for " +
                                  std::to_string(config.cv.k) + " folds");
    ClassifierConfig cc = classifier_config(config, classifier);
    resolve_ann_widths(cc, config, static_cast<std::size_t>(data.x.cols()));
    if (classifier == "SVM") {
      std::vector<ClassifierConfig> grid;
      for (double c : config.svm_c_grid)
        for (double s : config.svm_sigma_grid) {
          ClassifierConfig g = cc;
          auto& spec = std::get<SvmSpec>(g.model);
          spec.c = c;
          spec.sigma_scale = s;
          grid.push_back(std::move(g));
        }
      if (grid.empty()) throw ConfigError("svm grid is empty");
      CvParams gp = config.cv;
      gp.repeats = config.svm_grid_repeats;
      gp.seed = derive_seed(config.cv.seed, {0x9e1dULL});
      const SweepResult sr = sweep(data, grid, gp);
      if (!sr.winner) throw Error("every SVM grid cell failed: " + sr.entries.front().error);
      cc = grid[*sr.winner];
      const auto& spec = std::get<SvmSpec>(cc.model);
      cell.selection = "C=" + fmt(spec.c) + " sigma_scale=" + fmt(spec.sigma_scale);
    }
    EvalReport r = cross_validate(data, cc, config.cv);
    r.horizon_min = horizon_min;
    cell.report = std::move(r);
  } catch (const Error& e) {
    cell.error = e.what();
  }
  return cell;
}

void write_result_table(std::ostream& out, const std::string& title, const std::string& row_label,
                        const std::vector<CellResult>& cells) {
  out << title << '\n';
  out << std::left << std::setw(6) << "" << std::setw(10) << row_label << std::setw(12) << "Error rate"
      << std::setw(13) << "Sensitivity" << "Specificity\n";
  std::string last;
  for (const auto& c : cells) {
    if (c.classifier != last) {
      out << std::string(52, c.classifier == cells.front().classifier ? '-' : '=') << '\n';
    }
    out << std::left << std::setw(6) << (c.classifier != last ? c.classifier : "") << std::setw(10)
        << fmt(c.horizon_min);
    last = c.classifier;
    if (!c.report) {
      out << "failed\n";
      continue;
    }
    auto f4 = [](const std::optional<double>& v) { return v ? csv::format_fixed(*v, 4) : std::string("n/a"); };
    out << std::setw(12) << csv::format_fixed(c.report->error_rate, 4) << std::setw(13) << f4(c.report->sensitivity)
        << f4(c.report->specificity) << '\n';
  }
  out << std::string(52, '-') << '\n';
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& config) {
  auto out = open_out(dir / "manifest.txt");
  out << "# frictionml " << command << "\n# re-run: frictionml " << command << " --config manifest.txt --out <dir>\n";
  write_config(out, config);
}

std::string cell_row(const CellResult& c) {
  if (c.report) return report_csv_row(*c.report);
  return csv::join({c.classifier, fmt(c.horizon_min), "", "", "", "", "", ""});
}

}  // namespace

int cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir) {
  validate_config(config);
  prepare_dir(out_dir);
  std::vector<SynthResult> raw;
  synthesize_segments(config, &raw);
  std::vector<Measurement> all;
  for (const auto& r : raw) all.insert(all.end(), r.measurements.begin(), r.measurements.end());
  std::stable_sort(all.begin(), all.end(), [](const Measurement& a, const Measurement& b) { return a.timestamp < b.timestamp; });
  {
    auto out = open_out(out_dir / "measurements.csv");
    write_measurements(out, all);
  }
  auto out = open_out(out_dir / "synth_manifest.txt");
  out << "seed=" << config.seed << '\n';
  out << "bayes_error=" << fmt(raw.front().bayes_error) << '\n';
  out << "correlations=" << get_config_value(config, "synth.correlations") << '\n';
  for (std::size_t s = 0; s < raw.size(); ++s) {
    out << "segment" << s + 1 << ".seed=" << derive_seed(config.seed, {0x5e6ULL, s}) << '\n';
    out << "segment" << s + 1 << ".records=" << raw[s].measurements.size() << '\n';
    out << "segment" << s + 1 << ".clipped=" << raw[s].clipped << '\n';
  }
  const auto& r = raw.front();
  out << "latent_correlation=friction";
  for (Field f : r.fields) out << ',' << field_name(f);
  out << '\n';
  for (Eigen::Index i = 0; i < r.correlation.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.correlation.cols(); ++j) out << (j ? "," : "") << fmt(r.correlation(i, j));
    out << '\n';
  }
  write_manifest(out_dir, "synth", config);
  return 0;
}

int cmd_embed(const RunConfig& config, const std::filesystem::path& out_dir) {
  validate_config(config);
  prepare_dir(out_dir);
  const auto segments = load_segments(config);
  WindowSpec spec = config.window;
  spec.horizon = 0;
  for (const auto& seg : segments) {
    const auto samples = build_samples(seg.measurements, spec, config.label, config.horizon_mode, config.impute);
    if (samples.size() < 3)
      throw InsufficientDataError("segment " + seg.segment_id + ": need at least 3 samples to embed");
    // evenly strided subset keeps the embedding cost bounded
    std::vector<FeatureVector> picked;
    const std::size_t n = std::min(samples.size(), std::max<std::size_t>(3, config.embed_max_points));
    for (std::size_t i = 0; i < n; ++i) picked.push_back(samples[i * samples.size() / n]);
    LabeledData d = to_labeled(picked);
    const Eigen::MatrixXd z = apply_norm(d.x, fit_norm(d.x));
    const std::string tag = "_" + seg.segment_id + ".csv";

    const PcaModel pca = fit_pca(z, KeepCount{2});
    const Eigen::MatrixXd p2 = project_rows(pca, z);
    {
      auto out = open_out(out_dir / ("pca_2d" + tag));
      out << "point_id,label,pc0,pc1\n";
      for (Eigen::Index i = 0; i < p2.rows(); ++i)
        out << i << ',' << d.y[static_cast<std::size_t>(i)] << ',' << fmt(p2(i, 0)) << ','
            << fmt(p2.cols() > 1 ? p2(i, 1) : 0.0) << '\n';
    }
    {
      auto out = open_out(out_dir / ("pca_variance" + tag));
      out << "component,eigenvalue,t_n,fraction\n";
      for (Eigen::Index i = 0; i < pca.eigenvalues.size(); ++i) {
        const auto share = total_variance(pca.eigenvalues, static_cast<std::size_t>(i + 1));
        out << i + 1 << ',' << fmt(pca.eigenvalues(i)) << ',' << fmt(share.t_n) << ',' << fmt(share.fraction) << '\n';
      }
    }
    {
      SneConfig sc = config.sne;
      sc.seed = derive_seed(config.seed, {0x51eULL});
      const SneState st = embed(z, sc);
      auto out = open_out(out_dir / ("sne" + tag));
      write_embedding_csv(out, st.y, d.y);
    }
    {
      // correlation of the raw record fields, friction first
      std::vector<Field> fields{Field::kFriction};
      for (Field f : covariate_fields()) fields.push_back(f);
      std::vector<std::vector<double>> cols(fields.size());
      for (const auto& m : seg.measurements)
        for (std::size_t k = 0; k < fields.size(); ++k) cols[k].push_back(field_value(m, fields[k]));
      auto out = open_out(out_dir / ("correlation" + tag));
      out << "field";
      for (Field f : fields) out << ',' << field_name(f);
      out << '\n';
      for (std::size_t a = 0; a < fields.size(); ++a) {
        out << field_name(fields[a]);
        for (std::size_t b = 0; b < fields.size(); ++b) out << ',' << fmt(a == b ? 1.0 : pearson(cols[a], cols[b]));
        out << '\n';
      }
    }
  }
  write_manifest(out_dir, "embed", config);
  return 0;
}

int cmd_experiment(const RunConfig& config, const std::filesystem::path& out_dir) {
  validate_config(config);
  prepare_dir(out_dir);
  if (config.classifiers.empty() || config.horizons_min.empty()) throw ConfigError("experiment: nothing to run");
  const auto segments = load_segments(config);
  int failed = 0;
  auto failures = open_out(out_dir / "failures.csv");
  failures << "segment_id,classifier,horizon_min,error\n";
  auto selection = open_out(out_dir / "selection.csv");
  selection << "segment_id,classifier,horizon_min,selection\n";
  auto samples_csv = open_out(out_dir / "samples.csv");
  samples_csv << "segment_id,horizon_min,samples,slippery\n";

  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    std::vector<LabeledData> per_h;
    std::vector<std::string> build_err;
    for (double h : config.horizons_min) {
      WindowSpec spec = config.window;
      spec.horizon = static_cast<std::int64_t>(std::llround(h * 60.0));
      try {
        per_h.push_back(to_labeled(build_samples(seg.measurements, spec, config.label, config.horizon_mode, config.impute)));
        build_err.emplace_back();
      } catch (const Error& e) {
        per_h.emplace_back();
        build_err.emplace_back(e.what());
      }
      const auto& d = per_h.back();
      samples_csv << seg.segment_id << ',' << fmt(h) << ',' << d.size() << ','
                  << std::count(d.y.begin(), d.y.end(), kSlipperyLabel) << '\n';
    }

    std::vector<CellResult> cells;
    for (const auto& clf : config.classifiers) {
      for (std::size_t hi = 0; hi < config.horizons_min.size(); ++hi) {
        CellResult cell;
        if (build_err[hi].empty()) {
          RunConfig cc = config;
          cc.cv.seed = derive_seed(config.seed, {0xce11ULL, s, hi});
          cell = run_cell(per_h[hi], cc, clf, config.horizons_min[hi]);
        } else {
          cell.classifier = clf;
          cell.horizon_min = config.horizons_min[hi];
          cell.error = build_err[hi];
        }
        cell.segment_id = seg.segment_id;
        if (!cell.report) {
          ++failed;
          failures << seg.segment_id << ',' << clf << ',' << fmt(cell.horizon_min) << ",\"" << cell.error << "\"\n";
        }
        if (!cell.selection.empty())
          selection << seg.segment_id << ',' << clf << ',' << fmt(cell.horizon_min) << ',' << cell.selection << '\n';
        cells.push_back(std::move(cell));
      }
    }

    {
      auto out = open_out(out_dir / ("results_" + seg.segment_id + ".csv"));
      out << report_csv_header() << '\n';
      for (const auto& c : cells) out << cell_row(c) << '\n';
    }
    {
      auto out = open_out(out_dir / ("folds_" + seg.segment_id + ".csv"));
      out << "classifier,horizon_min,repeat,fold,tp,fp,tn,fn\n";
      for (const auto& c : cells) {
        if (!c.report) continue;
        for (std::size_t i = 0; i < c.report->per_fold.size(); ++i) {
          const auto& f = c.report->per_fold[i];
          out << c.classifier << ',' << fmt(c.horizon_min) << ',' << i / c.report->k << ',' << i % c.report->k << ','
              << f.tp << ',' << f.fp << ',' << f.tn << ',' << f.fn << '\n';
        }
      }
    }
    {
      auto out = open_out(out_dir / ("table_" + seg.segment_id + ".txt"));
      write_result_table(out, "Comparative results for road " + seg.segment_id, "Horizon", cells);
    }
  }
  write_manifest(out_dir, "experiment", config);
  return failed;
}

int cmd_sweep(const RunConfig& config, const std::filesystem::path& out_dir) {
  validate_config(config);
  prepare_dir(out_dir);
  if (config.sweep_values.empty()) throw ConfigError("sweep.values is empty");
  // validate every value up front so a typo is a config error, not a failed cell
  std::vector<RunConfig> variants;
  for (const auto& v : config.sweep_values) {
    RunConfig c = config;
    set_config_value(c, config.sweep_key, v);
    validate_config(c);
    variants.push_back(std::move(c));
  }
  const auto segments = load_segments(config);
  int failed = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    std::vector<CellResult> cells;
    std::optional<std::size_t> winner;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      const RunConfig& vc = variants[vi];
      CellResult cell;
      cell.classifier = config.sweep_classifier;
      cell.horizon_min = config.sweep_horizon_min;
      try {
        WindowSpec spec = vc.window;
        spec.horizon = static_cast<std::int64_t>(std::llround(config.sweep_horizon_min * 60.0));
        const auto data = to_labeled(build_samples(seg.measurements, spec, vc.label, vc.horizon_mode, vc.impute));
        RunConfig cc = vc;
        cc.cv.seed = derive_seed(config.seed, {0x5eeULL, s});
        cell = run_cell(data, cc, config.sweep_classifier, config.sweep_horizon_min);
      } catch (const Error& e) {
        cell.error = e.what();
      }
      if (!cell.report) {
        ++failed;
      } else if (!winner) {
        winner = vi;
      } else {
        const auto& b = *cells[*winner].report;
        const auto& c = *cell.report;
        if (c.error_rate < b.error_rate ||
            (c.error_rate == b.error_rate && c.sensitivity.value_or(-1.0) > b.sensitivity.value_or(-1.0)))
          winner = vi;
      }
      cells.push_back(std::move(cell));
    }
    {
      auto out = open_out(out_dir / ("sweep_" + seg.segment_id + ".csv"));
      out << "key,value," << report_csv_header() << ",winner,error\n";
      for (std::size_t i = 0; i < cells.size(); ++i)
        out << config.sweep_key << ",\"" << config.sweep_values[i] << "\"," << cell_row(cells[i]) << ','
            << (winner && *winner == i ? 1 : 0) << ",\"" << cells[i].error << "\"\n";
    }
    {
      auto out = open_out(out_dir / ("sweep_" + seg.segment_id + ".txt"));
      out << "Sweep of " << config.sweep_key << " for " << config.sweep_classifier << ", road " << seg.segment_id << '\n';
      out << std::left << std::setw(16) << config.sweep_key.substr(config.sweep_key.find('.') + 1) << std::setw(12)
          << "Error rate" << std::setw(13) << "Sensitivity" << "Specificity\n";
      for (std::size_t i = 0; i < cells.size(); ++i) {
        out << std::left << std::setw(16) << config.sweep_values[i];
        const auto& r = cells[i].report;
        if (!r) {
          out << "failed\n";
          continue;
        }
        auto f4 = [](const std::optional<double>& v) { return v ? csv::format_fixed(*v, 4) : std::string("n/a"); };
        out << std::setw(12) << csv::format_fixed(r->error_rate, 4) << std::setw(13) << f4(r->sensitivity)
            << f4(r->specificity) << '\n';
      }
    }
  }
  write_manifest(out_dir, "sweep", config);
  return failed;
}

}  // namespace frictionml
