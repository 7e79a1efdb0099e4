#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ssdg/core.hpp"

namespace ssdg {

/// Per unlabeled domain d (1..n), a C×D matrix of class representations plus
/// the bookkeeping both update policies need.
class ClassRepBank {
 public:
  ClassRepBank() = default;
  ClassRepBank(int num_unlabeled_domains, int num_classes, int feature_dim);

  int num_unlabeled_domains() const { return static_cast<int>(domains_.size()); }
  int num_classes() const { return num_classes_; }
  int feature_dim() const { return feature_dim_; }

  bool has_row(int domain, int cls) const { return at(domain).present[cls]; }
  /// True once every class of `domain` has a representation.
  bool ready(int domain) const;
  /// Absent rows read as zero.
  const Matrix& reps(int domain) const { return at(domain).reps; }
  /// -infinity until a sample of that class has been seen.
  double best_confidence(int domain, int cls) const { return at(domain).best(cls); }
  const std::vector<Vector>& candidates(int domain, int cls) const { return at(domain).candidates[cls]; }

  void set_row(int domain, int cls, const Vector& rep);
  void raise_best_confidence(int domain, int cls, double confidence);
  void add_candidate(int domain, int cls, Vector feature);

  bool operator==(const ClassRepBank&) const = default;

 private:
  struct DomainReps {
    Matrix reps;
    std::vector<bool> present;
    Vector best;
    std::vector<std::vector<Vector>> candidates;

    bool operator==(const DomainReps&) const = default;
  };

  const DomainReps& at(int domain) const;
  DomainReps& at(int domain);

  int num_classes_ = 0;
  int feature_dim_ = 0;
  std::vector<DomainReps> domains_;
};

/// One unlabeled sample after an inference pass. `psi` is empty when the bank
/// was not ready for the sample's domain.
struct ScoredSample {
  SampleId id{};
  int domain_id = 1;
  Vector feature;
  Vector q;
  Vector psi;
  Vector s;

  double confidence() const { return q.maxCoeff(); }
};

using SimilarityFn = std::function<double(const Vector&, const Vector&)>;

/// Cosine similarity clamped to [-1, 1]. Throws DegenerateVectorError on a
/// zero-norm operand.
double cosine_similarity(const Vector& a, const Vector& b);

/// Entry c is sim(feature, row c of M^domain). Throws BankNotReadyError while
/// any row of that domain is absent.
Vector similarity_vector(const Vector& feature, const ClassRepBank& bank, int domain_id,
                         const SimilarityFn& sim = cosine_similarity);

/// gamma * q + (1 - gamma) * psi, elementwise, without renormalization.
template <typename A, typename B>
VectorX<typename A::Scalar> blend_scores(const Eigen::MatrixBase<A>& q, const Eigen::MatrixBase<B>& psi,
                                        double gamma) {
  using Scalar = typename A::Scalar;
  if (q.size() != psi.size()) throw ShapeError("blend_scores: q and psi differ in length");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  return static_cast<Scalar>(gamma) * q + static_cast<Scalar>(1.0 - gamma) * psi;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int argmax_lowest(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) throw ShapeError("argmax of empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

struct PseudoLabel {
  int class_index = 0;
  Vector one_hot;
  double score = 0.0;
};

/// Confident when the maximal entry strictly exceeds delta; ambiguous otherwise.
template <typename Derived>
std::optional<PseudoLabel> assign_pseudo_label(const Eigen::MatrixBase<Derived>& s, double delta) {
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
  if (s.size() == 0 || !s.allFinite()) throw ShapeError("assign_pseudo_label: malformed score vector");
  const int best = argmax_lowest(s);
  const double score = static_cast<double>(s(best));
  if (!(score > delta)) return std::nullopt;
  return PseudoLabel{best, one_hot(best, static_cast<int>(s.size())), score};
}

/// Folds one full inference pass over S_u into the bank. The sample ranked
/// first for (d, c) is the one with argmax q = c and the highest max q (ties
/// to the earlier sample). `one` replaces row c by its feature; `ensemble`
/// admits it only when it beats the best confidence seen so far and stores
/// the mean of all admitted features.
ClassRepBank update_bank(ClassRepBank bank, std::span<const ScoredSample> scored, RepPolicy policy);

}  // namespace ssdg
