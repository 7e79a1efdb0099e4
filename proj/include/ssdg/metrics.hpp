#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssdg/trainer.hpp"

namespace ssdg {

inline constexpr const char* kMetricsSchema = "ssdg.metrics/1";

/// First record of every log.
struct RunHeader {
  std::string arm;
  int num_classes = 0;
  TrainConfig config;
  bool has_ground_truth = false;
  std::string dataset;
  std::string manifest;  // path of the manifest that produced the log
};

/// Appends one JSON object per line: a "run" header, then "step" and "epoch"
/// records. Each record carries the schema tag.
class MetricsWriter : public TrainObserver {
 public:
  MetricsWriter(const std::filesystem::path& path, const RunHeader& header, bool log_steps = true);

  void on_step(int epoch, int step, const LossReport& report) override;
  void on_epoch_end(const EpochSummary& summary, const TrainState&, const ClassRepBank&) override;

 private:
  void write(nlohmann::json record);

  std::ofstream out_;
  std::filesystem::path path_;
  bool log_steps_;
};

struct MetricsLog {
  std::filesystem::path path;
  RunHeader header;
  std::vector<EpochSummary> epochs;
  std::size_t steps = 0;
};

/// Throws SchemaError on a missing header, unknown schema or malformed line.
MetricsLog read_metrics_log(const std::filesystem::path& path);

}  // namespace ssdg
