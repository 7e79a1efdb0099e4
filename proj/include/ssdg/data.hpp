#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssdg/core.hpp"
#include "ssdg/nn.hpp"

namespace ssdg {

/// Shape of one input: a flat vector or a channel-major image.
struct InputLayout {
  enum class Kind { vector, image };
  Kind kind = Kind::vector;
  int dim = 0;
  nn::ImageShape image{};

  Eigen::Index size() const { return kind == Kind::vector ? Eigen::Index{dim} : image.size(); }
  bool operator==(const InputLayout&) const = default;
};

/// Ground truth of the unlabeled training domains. Only diagnostics read it;
/// the training sets themselves never carry these labels.
class HiddenLabels {
 public:
  void record(SampleId id, int label) { labels_[to_underlying(id)] = label; }
  bool empty() const { return labels_.empty(); }
  std::size_t size() const { return labels_.size(); }

  /// Fraction of `pseudo` whose pseudo-label matches the hidden label, or
  /// nothing when `pseudo` is empty or a sample has no recorded label.
  std::optional<double> pseudo_label_accuracy(std::span<const PseudoLabeledSample> pseudo) const;

  /// Diagnostic access for exporters and reports.
  std::optional<int> reveal(SampleId id) const;

 private:
  std::unordered_map<std::uint64_t, int> labels_;
};

/// Role assignment of named domains.
struct DomainRoles {
  std::string labeled;
  std::vector<std::string> unlabeled;
  std::optional<std::string> target;
};

/// Labeled samples per domain as produced by a generator or loader, before
/// roles and ids are assigned.
struct RawDataset {
  struct Item {
    Vector input;
    int label = 0;
  };
  std::vector<std::string> domain_names;     // ingestion order
  std::map<std::string, std::vector<Item>> domains;
  std::vector<std::string> class_names;
  InputLayout layout;
};

struct DatasetBundle {
  std::map<std::string, std::vector<Sample>> domains;
  std::string labeled_domain;
  std::vector<std::string> unlabeled_domains;
  std::optional<std::string> target_domain;
  std::vector<std::string> class_names;
  InputLayout layout;
  HiddenLabels ground_truth_for_unlabeled;
  /// Loader warnings (unreadable files, empty class directories).
  std::vector<std::string> warnings;
  std::size_t skipped_files = 0;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  /// Training domains: labeled + unlabeled.
  int num_training_domains() const { return 1 + static_cast<int>(unlabeled_domains.size()); }
  const std::vector<Sample>& labeled_samples() const { return domains.at(labeled_domain); }
  std::vector<Sample> unlabeled_samples() const;
  const std::vector<Sample>& target_samples() const;
  const std::vector<Sample>& samples(const std::string& domain) const;
};

/// Assigns domain ids (labeled 0, unlabeled 1..n in the given order, target
/// n+1), sample ids in that same order, and moves unlabeled ground truth into
/// the hidden store. Throws SchemaError on unknown or overlapping names.
DatasetBundle make_bundle(const RawDataset& raw, const DomainRoles& roles);

/// Role defaults: first domain labeled, last domain target, rest unlabeled;
/// explicit names override.
DomainRoles default_roles(const RawDataset& raw, const std::optional<std::string>& labeled = {},
                          const std::optional<std::string>& target = {},
                          const std::vector<std::string>& unlabeled = {});

enum class ShiftKind { rotation, channel_shift, additive_style };
std::string to_string(ShiftKind kind);
ShiftKind parse_shift_kind(const std::string& text);

/// Seeded multi-domain generator. Domain k applies the shift with strength
/// k · shift_magnitude (rotation, channel_shift) or a domain-specific style of
/// norm shift_magnitude (additive_style); magnitude 0 gives i.i.d. domains.
struct SyntheticSpec {
  enum class Mode { vector, image };

  int num_domains = 4;
  int num_classes = 5;
  int samples_per_class_per_domain = 200;
  ShiftKind shift_kind = ShiftKind::rotation;
  double shift_magnitude = 0.45;
  double class_separation = 3.0;
  double noise_std = 0.5;
  std::uint64_t seed = 0;
  Mode mode = Mode::vector;
  int dim = 16;          // vector mode
  int image_side = 12;   // image mode
  int image_channels = 3;

  void validate() const;
  bool operator==(const SyntheticSpec&) const = default;
};

RawDataset generate_synthetic_raw(const SyntheticSpec& spec);

/// Default roles: d0 labeled, last domain target, the rest unlabeled.
DatasetBundle generate_synthetic(const SyntheticSpec& spec);

/// Directory ingestion settings. Roles are always explicit.
struct SplitSpec {
  DomainRoles roles;
  int image_side = 32;
  int channels = 3;
  std::vector<double> mean{0.485, 0.456, 0.406};
  std::vector<double> stddev{0.229, 0.224, 0.225};
};

/// Layout root/<domain>/<class>/<file>, everything visited in sorted order.
DatasetBundle load_directory_dataset(const std::filesystem::path& root, const SplitSpec& split);

/// Self-describing columnar export: header "domain,label,x0,...", one row per
/// sample, plus a leading "# layout=..." comment.
void write_table(const RawDataset& raw, const std::filesystem::path& path);
RawDataset read_table(const std::filesystem::path& path);

}  // namespace ssdg
