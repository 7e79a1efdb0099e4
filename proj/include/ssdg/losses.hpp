#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "ssdg/core.hpp"
#include "ssdg/mixup.hpp"
#include "ssdg/model.hpp"

namespace ssdg {

/// Mean cross-entropy of probability rows against (soft) target rows, natural
/// log. Target entries of exactly 0 contribute nothing.
template <typename Scalar>
Scalar soft_cross_entropy(const MatrixX<Scalar>& probs, const MatrixX<Scalar>& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw ShapeError("cross-entropy: predictions are " + std::to_string(probs.rows()) + "x" +
                     std::to_string(probs.cols()) + ", targets " + std::to_string(targets.rows()) + "x" +
                     std::to_string(targets.cols()));
  }
  if (probs.rows() == 0) return Scalar(0);
  Scalar total(0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      if (targets(i, j) != Scalar(0)) total -= targets(i, j) * std::log(probs(i, j));
    }
  }
  return total / static_cast<Scalar>(probs.rows());
}

/// Mean Shannon entropy of probability rows; 0·ln 0 := 0, empty batch → 0.
template <typename Scalar>
Scalar entropy_loss(const MatrixX<Scalar>& probs) {
  if (probs.rows() == 0) return Scalar(0);
  Scalar total(0);
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const Scalar p = probs.data()[i];
    if (p > Scalar(0)) total -= p * std::log(p);
  }
  return total / static_cast<Scalar>(probs.rows());
}

/// Labeled and pseudo-labeled cross-entropies, each averaged over its own set.
template <typename Scalar>
Scalar cls_loss(const MatrixX<Scalar>& probs_labeled, const MatrixX<Scalar>& labels,
                const MatrixX<Scalar>& probs_pseudo, const MatrixX<Scalar>& pseudo_labels) {
  return soft_cross_entropy(probs_labeled, labels) + soft_cross_entropy(probs_pseudo, pseudo_labels);
}

/// Domain cross-entropy over every sample of the batch, labels may be soft.
template <typename Scalar>
Scalar adv_loss(const MatrixX<Scalar>& domain_probs, const MatrixX<Scalar>& domain_labels) {
  return soft_cross_entropy(domain_probs, domain_labels);
}

/// exp(-5 (1 - min(epoch / ramp_epochs, 1))^2).
double ramp_weight(int epoch, int ramp_epochs);

struct LossReport {
  double cls = 0.0;
  double adv = 0.0;
  double cls_mix = 0.0;
  double adv_mix = 0.0;
  double ent = 0.0;
  double ramp = 0.0;
  double total_model = 0.0;
  double total_discriminator = 0.0;

  bool all_finite() const;
  bool operator==(const LossReport&) const = default;
};

struct Objectives {
  double model = 0.0;
  double discriminator = 0.0;
};

/// model = cls + cls_mix + ramp (-adv - adv_mix + ent); discriminator = adv + adv_mix.
Objectives assemble_objectives(const LossReport& report);

/// cls_mix through the chosen class head and adv_mix through F_d, both soft
/// cross-entropies averaged over the mixed batch; empty batch → (0, 0).
std::pair<double, double> mix_losses(const MixedBatch& mixed, const ModelBundle<double>& bundle,
                                     Head head = Head::generalizable);

/// One optimization step's worth of samples, already split by role.
struct TrainingBatch {
  Matrix labeled_x;
  Matrix labeled_y;  // one-hot
  Matrix pseudo_x;
  Matrix pseudo_y;   // one-hot
  std::vector<int> pseudo_domains;
  Matrix unlabeled_x;
  std::vector<int> unlabeled_domains;
  MixedBatch mixed;
};

/// Coefficient of each term. A zero coefficient skips the term (it is then
/// reported as 0).
struct TermWeights {
  double cls = 1.0;
  double cls_mix = 1.0;
  double adv = 1.0;
  double adv_mix = 1.0;
  double ent = 1.0;
};

struct ObjectiveSpec {
  TermWeights weights;
  /// Multiplier on the gradient the discriminator sends back into F_g.
  /// Training uses -ramp (a reversal boundary of scale ramp); +1 gives the
  /// plain gradient of the weighted adversarial terms.
  double feature_adv_scale = 1.0;
  /// Head that receives cls_mix; predictive when the dual classifier is ablated.
  Head mix_head = Head::generalizable;
};

/// Spec realizing the training objectives at the given ramp: F_g, F_c, F_m
/// get the gradient of the model objective and F_d that of the
/// discriminator objective.
ObjectiveSpec training_objective(double ramp, const AblationFlags& flags);

/// Evaluates all enabled terms on `batch`. When `grads` is given it must come
/// from `bundle.zero_gradients()`; the gradient of
///   cls·L_cls + cls_mix·L_cls_mix + ent·L_ent          (F_g, F_c, F_m)
///   adv·L_adv + adv_mix·L_adv_mix                      (F_d, and F_g scaled)
/// is accumulated into it.
LossReport evaluate_batch(const ModelBundle<double>& bundle, const TrainingBatch& batch,
                          const ObjectiveSpec& spec, double ramp, BundleGradients<double>* grads);

}  // namespace ssdg
