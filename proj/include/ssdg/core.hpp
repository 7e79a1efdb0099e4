#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssdg/errors.hpp"

namespace ssdg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Opaque identity assigned at ingestion. Disjointness of the training sets is
/// decided on ids, never on array contents.
enum class SampleId : std::uint64_t {};

constexpr std::uint64_t to_underlying(SampleId id) noexcept {
  return static_cast<std::uint64_t>(id);
}

/// Domain 0 is the labeled source; 1..n are unlabeled sources.
constexpr int kLabeledDomain = 0;

struct Sample {
  SampleId id{};
  Vector input;
  std::optional<int> class_label;
  int domain_id = kLabeledDomain;
};

struct PseudoLabeledSample {
  Sample sample;
  Vector pseudo_label;  // one-hot, length C
  double score_at_assignment = 0.0;
  int epoch_assigned = 0;

  int class_index() const;
};

/// One-hot row of length `size` with a 1 at `index`.
Vector one_hot(int index, int size);

enum class RepPolicy { one, ensemble };

std::string to_string(RepPolicy policy);
RepPolicy parse_rep_policy(const std::string& text);

struct AblationFlags {
  bool use_dapl = true;
  bool use_dual_classifier = true;
  bool use_mixup = true;
  bool mixup_all = false;
  bool use_entropy = true;
  bool use_adv_mix = true;
  // Both off for SupOne.
  bool use_adversarial = true;
  bool use_pseudo_labels = true;

  bool operator==(const AblationFlags&) const = default;
};

/// Every hyper-parameter of a run.
struct TrainConfig {
  double gamma = 0.1;
  double delta = 0.24;
  double alpha = 0.2;
  int num_classes = 0;
  int epochs = 40;
  int batch_size = 128;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> lr_decay_epochs{30, 50};
  /// Length of the adversarial/entropy warm-up; 0 selects 30% of `epochs`.
  int ramp_epochs = 0;
  RepPolicy rep_policy = RepPolicy::ensemble;
  std::uint64_t seed = 0;
  AblationFlags flags;

  // Desk-scale architecture.
  int feature_dim = 64;
  int hidden_dim = 64;
  int conv_channels = 16;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  int effective_ramp_epochs() const;
  double learning_rate_at(int epoch) const;

  bool operator==(const TrainConfig&) const = default;
};

/// The three evolving sample sets of a run.
///
/// |S_l| never changes, samples only ever move from S_u to S_p, and a migrated
/// sample keeps the pseudo-label it was given.
class TrainState {
 public:
  TrainState() = default;
  TrainState(std::vector<Sample> labeled, std::vector<Sample> unlabeled);

  /// Rebuilds a state from serialized membership; validates every invariant.
  static TrainState restore(std::vector<Sample> labeled,
                            std::vector<Sample> unlabeled,
                            std::vector<PseudoLabeledSample> pseudo, int epoch);

  const std::vector<Sample>& labeled_set() const noexcept { return labeled_; }
  const std::vector<Sample>& unlabeled_set() const noexcept { return unlabeled_; }
  const std::vector<PseudoLabeledSample>& pseudo_set() const noexcept {
    return pseudo_;
  }
  int epoch() const noexcept { return epoch_; }
  void set_epoch(int epoch) noexcept { epoch_ = epoch; }

  std::size_t total_size() const noexcept {
    return labeled_.size() + unlabeled_.size() + pseudo_.size();
  }

  friend TrainState migrate_confident(TrainState state,
                                      std::span<const PseudoLabeledSample> confident);

 private:
  void check_invariants() const;

  std::vector<Sample> labeled_;
  std::vector<Sample> unlabeled_;
  std::vector<PseudoLabeledSample> pseudo_;
  int epoch_ = 0;
};

/// Moves `confident` from S_u to S_p. Throws IdentityError when an element is
/// not currently in S_u (including a second migration of the same sample).
TrainState migrate_confident(TrainState state,
                             std::span<const PseudoLabeledSample> confident);

}  // namespace ssdg
