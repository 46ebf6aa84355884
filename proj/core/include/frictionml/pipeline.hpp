#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "frictionml/dataset.hpp"
#include "frictionml/eval.hpp"
#include "frictionml/pca.hpp"
#include "frictionml/sne.hpp"
#include "frictionml/structuring.hpp"

namespace frictionml {

enum class HorizonMode {
  kLabelLookahead,  // window (t - h - T, t - h], label at t
  kShiftWindow,     // window shifted back by whole window lengths
};

enum class ImputeScheme { kNeighbor, kInverseDistance };

/// Flat key=value run configuration. Every key has a default; see
/// config_keys() for the list and describe_config() for docs.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string data;  // measurement CSV; empty = synthesize from synth.*
  std::size_t segments = 3;
  SynthConfig synth;
  LabelPolicy label;
  WindowSpec window;
  HorizonMode horizon_mode = HorizonMode::kLabelLookahead;
  ImputeScheme impute = ImputeScheme::kNeighbor;
  PcaPolicy pca = KeepCount{14};
  bool pca_for_ann = false;
  std::vector<std::string> classifiers{"LR", "SVM", "ANN"};
  std::vector<double> horizons_min{0, 30, 60, 90, 120};
  CvParams cv;
  LogRegSpec logreg;
  std::vector<double> svm_c_grid{0.1, 1.0, 10.0};
  std::vector<double> svm_sigma_grid{0.5, 1.0, 2.0};
  std::size_t svm_grid_repeats = 1;
  SvmSpec svm;
  MlpSpec ann;
  std::size_t ann_layers = 1;  // hidden layers of input width when ann.hidden is empty
  SneConfig sne;
  std::size_t embed_max_points = 400;
  std::string sweep_key = "window.quantize_interval";
  std::vector<std::string> sweep_values{"120", "300", "600", "1800", "3600"};
  std::string sweep_classifier = "LR";
  double sweep_horizon_min = 0.0;

  RunConfig();
};

std::vector<std::string> config_keys();
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Cross-key consistency checks run by every command before any work. Throws
// ConfigError.
void validate_config(const RunConfig& config);

// '#' starts a comment; blank lines ignored. Throws ConfigError on unknown
// keys or bad values.
void apply_config_text(RunConfig& config, std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
// "key=value" override as given on the command line.
void apply_override(RunConfig& config, const std::string& assignment);

// All keys in canonical order; feeding this back reproduces the config.
void write_config(std::ostream& out, const RunConfig& config);
void describe_config(std::ostream& out);

// Loaded or synthesized measurements, confidence-filtered and sorted.
struct SegmentData {
  std::string segment_id;
  std::vector<Measurement> measurements;
  double bayes_error = 0.0;  // synthesized data only
};

std::vector<SegmentData> synthesize_segments(const RunConfig& config, std::vector<SynthResult>* raw = nullptr);
// Loaded data comes back one entry per segment id, in id order.
std::vector<SegmentData> load_segments(const RunConfig& config);

// Offset between the label time and the end of the feature window.
std::int64_t window_offset(const WindowSpec& spec, HorizonMode mode);

/// Quantizes, attaches the history channel and builds one feature vector per
/// labelled record. A quantized record enters a window only when its whole
/// interval ends by the window end. Records whose window is empty are skipped.
std::vector<FeatureVector> build_samples(std::span<const Measurement> measurements, const WindowSpec& spec,
                                         const LabelPolicy& policy, HorizonMode mode, ImputeScheme impute);

LabeledData to_labeled(std::span<const FeatureVector> samples);

ClassifierConfig classifier_config(const RunConfig& config, const std::string& id);

struct CellResult {
  std::string segment_id;
  std::string classifier;
  double horizon_min = 0.0;
  std::optional<EvalReport> report;
  std::string error;
  std::string selection;  // e.g. chosen SVM grid cell
};

/// Cross-validates one classifier on prepared samples. SVM first picks its
/// (C, sigma) cell by a CV sweep.
CellResult run_cell(const LabeledData& data, const RunConfig& config, const std::string& classifier,
                    double horizon_min);

// Paper-style result table for one segment.
void write_result_table(std::ostream& out, const std::string& title, const std::string& row_label,
                        const std::vector<CellResult>& cells);

// Commands write their outputs plus manifest.txt into `out_dir`. They return
// the number of failed cells (0 for commands without cells).
int cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir);
int cmd_embed(const RunConfig& config, const std::filesystem::path& out_dir);
int cmd_experiment(const RunConfig& config, const std::filesystem::path& out_dir);
int cmd_sweep(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace frictionml
