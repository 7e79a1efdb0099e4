#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssdg/config.hpp"
#include "ssdg/data.hpp"
#include "ssdg/trainer.hpp"

namespace ssdg {

/// Named ablations. "ours" leaves the flags alone; "supone" disables every
/// use of the unlabeled domains; "one" switches the representation policy.
const std::vector<std::string>& ablation_names();
/// Throws ConfigError for an unknown name.
void apply_ablation(TrainConfig& config, const std::string& name);

/// Where the samples come from.
struct DatasetSource {
  enum class Kind { synthetic, directory, table };
  Kind kind = Kind::synthetic;
  SyntheticSpec synth;
  std::filesystem::path path;  // directory root or table file
  std::optional<std::string> labeled;
  std::optional<std::string> target;
  std::vector<std::string> unlabeled;
  int image_side = 32;
  int channels = 3;
  std::vector<double> mean{0.485, 0.456, 0.406};
  std::vector<double> stddev{0.229, 0.224, 0.225};

  nlohmann::json describe() const;
  static DatasetSource from_json(const nlohmann::json& j);
};

std::string to_string(DatasetSource::Kind kind);

/// Throws ConfigError naming "dataset.path" when a file-backed source has no path.
DatasetBundle load_dataset(const DatasetSource& source);

bool apply_synth_key(SyntheticSpec& spec, const std::string& key, const std::string& value);

/// Everything a config file can say.
struct RunSpec {
  TrainConfig config;
  DatasetSource dataset;
  std::string arm = "ours";
  std::vector<std::string> ablations;
  std::filesystem::path output_dir = "runs";
  bool log_steps = true;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only

  std::vector<std::pair<double, double>> sweep_gamma_delta;
  std::vector<double> sweep_alpha;
  std::vector<std::uint64_t> sweep_seeds{0, 1, 2, 3, 4};

  /// The run's config after ablations.
  TrainConfig effective_config() const;
  /// Arm name used in logs and reports: "no-dapl" for ours plus that
  /// ablation, "supone+one" for stacked names.
  std::string label() const;
};

/// Applies one key; "dataset.*", "synth.*", "sweep.*", run keys and every
/// TrainConfig key are accepted. Throws ConfigError on anything else.
void apply_run_key(RunSpec& spec, const std::string& key, const std::string& value);
RunSpec run_spec_from(const KeyValues& values);

/// Honors SSDG_OUTPUT_DIR when set.
std::filesystem::path resolve_output_dir(const std::filesystem::path& requested);

/// Version of the code that produced a run.
std::string code_version();

struct RunManifest {
  TrainConfig config;
  nlohmann::json dataset;
  std::string code_version;
  std::string arm;
  std::vector<std::string> ablations;
  std::filesystem::path metrics;
  std::filesystem::path checkpoint;
  std::filesystem::path report;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct RunOutcome {
  RunManifest manifest;
  std::filesystem::path manifest_path;
  std::vector<EpochSummary> summaries;
};

/// Trains one configuration and writes manifest.json, metrics.jsonl,
/// checkpoint.ssdg and report.txt into `run_dir`. With `resume_from` the
/// trainer continues from that checkpoint and the log replays its epochs.
RunOutcome execute_run(const RunSpec& spec, const TrainConfig& config, const DatasetBundle& data,
                       const std::filesystem::path& run_dir, const std::string& arm_label,
                       const std::optional<std::filesystem::path>& resume_from = std::nullopt);

struct SweepPoint {
  std::string label;  // "gamma=0.1,delta=0.24" or "alpha=0.2"
  std::string axis;   // "gamma_delta" or "alpha"
  TrainConfig config;
};

/// One point per grid entry; the seeds multiply at run time.
std::vector<SweepPoint> sweep_grid(const RunSpec& spec);

struct SweepCell {
  std::string axis;
  std::string label;
  std::vector<std::uint64_t> seeds_ok;
  std::vector<std::pair<std::uint64_t, std::string>> failures;
  std::vector<double> target_accuracy;
  std::vector<std::filesystem::path> manifests;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::size_t failed_runs() const;
};

/// Runs every point for every seed. A failing run is recorded and the sweep
/// continues.
SweepResult run_sweep(const RunSpec& spec, const DatasetBundle& data, const std::filesystem::path& out_dir);

/// Mean-over-seeds table, one row per point.
std::string sweep_table(const SweepResult& result);

}  // namespace ssdg
