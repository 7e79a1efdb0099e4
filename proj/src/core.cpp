#include "ssdg/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ssdg {

int PseudoLabeledSample::class_index() const {
  Eigen::Index index = 0;
  pseudo_label.maxCoeff(&index);
  return static_cast<int>(index);
}

Vector one_hot(int index, int size) {
  if (index < 0 || index >= size) {
    throw ShapeError("one_hot: index " + std::to_string(index) +
                     " outside [0, " + std::to_string(size) + ")");
  }
  Vector v = Vector::Zero(size);
  v(index) = 1.0;
  return v;
}

std::string to_string(RepPolicy policy) {
  return policy == RepPolicy::one ? "one" : "ensemble";
}

RepPolicy parse_rep_policy(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "one") return RepPolicy::one;
  if (lower == "ensemble") return RepPolicy::ensemble;
  throw ConfigError("rep_policy: expected 'one' or 'ensemble', got '" + text + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must lie in [0, 1]");
  if (!(delta > 0.0) || !std::isfinite(delta)) fail("delta", "must be > 0");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha", "must be > 0");
  if (num_classes != 0 && num_classes < 2) fail("num_classes", "must be 0 (from the dataset) or >= 2");
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (batch_size < 2) fail("batch_size", "must be >= 2");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (ramp_epochs < 0) fail("ramp_epochs", "must be >= 0");
  for (int e : lr_decay_epochs) {
    if (e < 0) fail("lr_decay_epochs", "entries must be >= 0");
  }
  if (feature_dim < 1) fail("feature_dim", "must be >= 1");
  if (hidden_dim < 1) fail("hidden_dim", "must be >= 1");
  if (conv_channels < 1) fail("conv_channels", "must be >= 1");
  if (flags.mixup_all && !flags.use_mixup) {
    fail("mixup_all", "requires use_mixup");
  }
}

int TrainConfig::effective_ramp_epochs() const {
  if (ramp_epochs > 0) return ramp_epochs;
  return std::max(1, static_cast<int>(std::lround(0.3 * epochs)));
}

double TrainConfig::learning_rate_at(int epoch) const {
  double rate = lr;
  for (int e : lr_decay_epochs) {
    if (epoch >= e) rate *= 0.1;
  }
  return rate;
}

TrainState::TrainState(std::vector<Sample> labeled, std::vector<Sample> unlabeled)
    : labeled_(std::move(labeled)), unlabeled_(std::move(unlabeled)) {
  check_invariants();
}

TrainState TrainState::restore(std::vector<Sample> labeled,
                               std::vector<Sample> unlabeled,
                               std::vector<PseudoLabeledSample> pseudo, int epoch) {
  TrainState state;
  state.labeled_ = std::move(labeled);
  state.unlabeled_ = std::move(unlabeled);
  state.pseudo_ = std::move(pseudo);
  state.epoch_ = epoch;
  state.check_invariants();
  return state;
}

void TrainState::check_invariants() const {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(total_size());
  auto claim = [&](SampleId id) {
    if (!seen.insert(to_underlying(id)).second) {
      throw IdentityError("sample id " + std::to_string(to_underlying(id)) +
                          " appears in more than one training set");
    }
  };
  for (const Sample& s : labeled_) {
    claim(s.id);
    if (!s.class_label) throw IdentityError("labeled sample without class label");
    if (s.domain_id != kLabeledDomain) {
      throw IdentityError("labeled sample with domain_id != 0");
    }
  }
  for (const Sample& s : unlabeled_) {
    claim(s.id);
    if (s.class_label) throw IdentityError("unlabeled sample exposes a class label");
    if (s.domain_id < 1) throw IdentityError("unlabeled sample with domain_id < 1");
  }
  for (const PseudoLabeledSample& p : pseudo_) {
    claim(p.sample.id);
    if (p.sample.class_label) {
      throw IdentityError("pseudo-labeled sample exposes a class label");
    }
    const double ones = (p.pseudo_label.array() == 1.0).count();
    const double zeros = (p.pseudo_label.array() == 0.0).count();
    if (ones != 1 || ones + zeros != p.pseudo_label.size()) {
      throw IdentityError("pseudo-label is not one-hot");
    }
  }
}

TrainState migrate_confident(TrainState state,
                             std::span<const PseudoLabeledSample> confident) {
  if (confident.empty()) return state;

  std::unordered_set<std::uint64_t> moving;
  moving.reserve(confident.size());
  for (const PseudoLabeledSample& p : confident) {
    if (!moving.insert(to_underlying(p.sample.id)).second) {
      throw IdentityError("sample id " + std::to_string(to_underlying(p.sample.id)) +
                          " listed twice in one migration");
    }
  }
  std::size_t found = 0;
  for (const Sample& s : state.unlabeled_) {
    if (moving.contains(to_underlying(s.id))) ++found;
  }
  if (found != moving.size()) {
    throw IdentityError("migration lists " + std::to_string(moving.size() - found) +
                        " sample(s) not present in the unlabeled set");
  }

  std::erase_if(state.unlabeled_, [&](const Sample& s) {
    return moving.contains(to_underlying(s.id));
  });
  state.pseudo_.insert(state.pseudo_.end(), confident.begin(), confident.end());
  state.check_invariants();
  return state;
}

}  // namespace ssdg
