#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ssdg/core.hpp"
#include "ssdg/dapl.hpp"
#include "ssdg/data.hpp"
#include "ssdg/losses.hpp"
#include "ssdg/model.hpp"
#include "ssdg/optimizer.hpp"

namespace ssdg {

struct EpochSummary {
  int epoch = 0;
  LossReport losses;  // means over the epoch's steps
  int num_confident_new = 0;
  int pseudo_set_size = 0;
  int unlabeled_set_size = 0;
  /// Domains whose bank was complete when this epoch scored S_u.
  int bank_ready_domains = 0;
  double learning_rate = 0.0;
  std::optional<double> pseudo_label_accuracy;
  std::optional<double> target_accuracy;

  bool operator==(const EpochSummary&) const = default;
};

/// Hooks into the training loop; all default to no-ops.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_step(int /*epoch*/, int /*step*/, const LossReport&) {}
  /// S_u of `domain` was scored at `epoch` against a bank last written at
  /// `written_epoch` (-1 when never written).
  virtual void on_bank_read(int /*epoch*/, int /*domain*/, int /*written_epoch*/) {}
  virtual void on_bank_write(int /*epoch*/) {}
  virtual void on_epoch_end(const EpochSummary&, const TrainState&, const ClassRepBank&) {}
};

/// Head used for prediction on unseen domains: F_m, or F_c when the dual
/// classifier is ablated.
Head inference_head(const AblationFlags& flags);

BackboneSpec backbone_for(const InputLayout& layout, const TrainConfig& config);

/// Top-1 accuracy of argmax over the given head. Throws SchemaError on an
/// empty or unlabeled domain.
double evaluate(const ModelBundle<double>& bundle, std::span<const Sample> domain,
                Head head = Head::generalizable);

/// Runs the alternation of optimization, inference on S_u, bank update and
/// pseudo-label migration one epoch at a time.
class Trainer {
 public:
  /// `config.num_classes` of 0 is taken from the dataset.
  Trainer(TrainConfig config, const DatasetBundle& data);

  /// Rebuilds a trainer from a checkpoint archive. The archive must have been
  /// written for the same configuration (hash-checked) and dataset.
  static Trainer resume(const std::filesystem::path& checkpoint, TrainConfig config,
                        const DatasetBundle& data);

  void set_observer(TrainObserver* observer) { observer_ = observer; }

  bool finished() const { return next_epoch_ >= config_.epochs; }
  int next_epoch() const { return next_epoch_; }
  EpochSummary run_epoch();
  /// Runs to the configured epoch count; returns every summary so far.
  const std::vector<EpochSummary>& run();

  void save_checkpoint(const std::filesystem::path& path) const;

  const TrainConfig& config() const { return config_; }
  const ModelBundle<double>& model() const { return model_; }
  const TrainState& state() const { return state_; }
  const ClassRepBank& bank() const { return bank_; }
  const std::vector<EpochSummary>& summaries() const { return summaries_; }

 private:
  struct StepDraw;

  void optimize_epoch(int epoch, double lr, double ramp, LossReport& mean);
  int label_unlabeled(int epoch, int& ready_domains);
  StepDraw draw_step(std::vector<std::size_t>& pool_a, std::size_t& cursor_a,
                     std::vector<std::size_t>& pool_u, std::size_t& cursor_u, std::size_t take_a,
                     std::size_t take_u);

  TrainConfig config_;
  const DatasetBundle* data_;
  std::vector<Sample> target_;
  ModelBundle<double> model_;
  SgdMomentum<double> optimizer_;
  ClassRepBank bank_;
  std::vector<int> bank_written_;  // per unlabeled domain, -1 = never
  TrainState state_;
  std::mt19937_64 rng_;
  int next_epoch_ = 0;
  std::map<std::uint64_t, int> last_argmax_;  // current argmax q of S_u samples (mixup_all)
  std::vector<EpochSummary> summaries_;
  TrainObserver* observer_ = nullptr;
};

struct TrainResult {
  ModelBundle<double> model;
  std::vector<EpochSummary> summaries;
};

TrainResult train(const TrainConfig& config, const DatasetBundle& data, TrainObserver* observer = nullptr);

}  // namespace ssdg
