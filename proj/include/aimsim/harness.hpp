#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimsim/analysis.hpp"
#include "aimsim/pipeline.hpp"

namespace aimsim {

inline constexpr int kSchemaVersion = 1;

/// One fully resolved experiment (a single sweep point, or the base config).
struct ExperimentConfig {
  std::string name = "experiment";
  std::filesystem::path manifest;
  std::filesystem::path test_images, test_labels;
  std::filesystem::path calib_images, calib_labels;
  std::size_t test_count = 0;   // 0 keeps every image
  std::size_t calib_count = 0;
  int weight_bits = 8;
  PipelineConfig pipeline;
  int trials = 10;
  std::uint64_t seed = 1;
  int threads = 0;              // 0 leaves the OpenMP default
  std::filesystem::path output = "results";

  std::vector<std::pair<std::string, nlohmann::json>> sweep_axes;   // key -> list of values
  std::vector<std::pair<std::string, nlohmann::json>> sweep_point;  // key -> value of this point
  std::string resolved_toml;    // config text with absolute paths and no sweep table
};

/// Parses TOML text; relative paths resolve against `base_dir`. Throws ConfigError.
ExperimentConfig parse_experiment(const std::string& toml_text, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Cartesian product of the sweep axes, first axis varying slowest.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base);

/// Overrides a scalar parameter by dotted key ("run.seed", "errors.alpha", ...).
ExperimentConfig with_override(const ExperimentConfig& cfg, const std::string& key, const nlohmann::json& value);

struct RunRecord {
  std::string name;
  std::size_t sweep_index = 0;
  std::vector<std::pair<std::string, nlohmann::json>> sweep_point;
  std::string config_toml;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<double> accuracies;
  double mean = 0.0;
  double two_sigma = 0.0;
  double digital_accuracy = 0.0;
  nlohmann::json activation_ranges = nlohmann::json::array();
  nlohmann::json adc_ranges = nlohmann::json::array();
  nlohmann::json op_counts = nlohmann::json::object();
  double wall_time_s = 0.0;
  std::string version;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

/// Loaded model and data shared by sweep points.
struct Workspace {
  FloatNetwork folded;
  ImageBatch test, calibration;
};

Workspace load_workspace(const ExperimentConfig& cfg);

/// Calibrated, mapped network for one configuration.
MappedNetwork prepare(const ExperimentConfig& cfg, const Workspace& ws, OutputStats* adc_stats = nullptr);

/// Per-image op counts summed over the analog layers.
OpCounts network_op_counts(const MappedNetwork& mapped);

RunRecord run_point(const ExperimentConfig& cfg, const Workspace& ws, std::size_t sweep_index = 0);

/// Runs every sweep point, writes <output>/<name>_<index>.json and <output>/summary.csv.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Re-runs the configuration stored in a record.
RunRecord rerun_record(const RunRecord& record);

RunRecord load_record(const std::filesystem::path& path);

void write_summary_csv(std::ostream& out, const std::vector<RunRecord>& records);

/// Tidy series: x_param, x, mean, lo, hi, series. Throws ConfigError on an empty
/// list or on records that sweep different parameters.
void emit_plotdata(const std::vector<RunRecord>& records, std::ostream& out);

}  // namespace aimsim
