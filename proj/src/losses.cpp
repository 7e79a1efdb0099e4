#include "ssdg/losses.hpp"

#include <algorithm>

namespace ssdg {

double ramp_weight(int epoch, int ramp_epochs) {
  if (ramp_epochs < 1) throw ConfigError("ramp_epochs must be >= 1");
  const double t = std::min(static_cast<double>(std::max(epoch, 0)) / ramp_epochs, 1.0);
  return std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

bool LossReport::all_finite() const {
  for (double v : {cls, adv, cls_mix, adv_mix, ent, ramp, total_model, total_discriminator}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Objectives assemble_objectives(const LossReport& r) {
  return {r.cls + r.cls_mix + r.ramp * (-r.adv - r.adv_mix + r.ent), r.adv + r.adv_mix};
}

std::pair<double, double> mix_losses(const MixedBatch& mixed, const ModelBundle<double>& bundle,
                                     Head head) {
  if (mixed.empty()) return {0.0, 0.0};
  const Matrix features = bundle.features(mixed.x);
  const Matrix class_probs = nn::softmax_rows(bundle.classifier(head).forward(features));
  const Matrix domain_probs = nn::softmax_rows(bundle.domain_discriminator().forward(features));
  return {soft_cross_entropy(class_probs, mixed.y), soft_cross_entropy(domain_probs, mixed.z)};
}

ObjectiveSpec training_objective(double ramp, const AblationFlags& flags) {
  ObjectiveSpec spec;
  spec.weights.cls = 1.0;
  spec.weights.cls_mix = (flags.use_mixup || flags.use_dual_classifier) ? 1.0 : 0.0;
  spec.weights.adv = flags.use_adversarial ? 1.0 : 0.0;
  spec.weights.adv_mix = (flags.use_adversarial && flags.use_adv_mix && flags.use_mixup) ? 1.0 : 0.0;
  spec.weights.ent = flags.use_entropy ? ramp : 0.0;
  spec.feature_adv_scale = -ramp;
  spec.mix_head = flags.use_dual_classifier ? Head::generalizable : Head::predictive;
  return spec;
}

namespace {

// Soft cross-entropy of logits rows [begin, begin+n) against targets; adds
// scale·dL/dlogits into grad (the loss is the mean over the n rows).
double cross_entropy_rows(const Matrix& logits, const Matrix& log_probs, Eigen::Index begin,
                          const Matrix& targets, double scale, Matrix* grad) {
  const Eigen::Index n = targets.rows();
  if (n == 0) return 0.0;
  if (targets.cols() != logits.cols()) throw ShapeError("target arity does not match head output");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < targets.cols(); ++j) {
      if (targets(i, j) != 0.0) total -= targets(i, j) * log_probs(begin + i, j);
    }
  }
  if (grad != nullptr) {
    const Matrix probs = log_probs.middleRows(begin, n).array().exp().matrix();
    grad->middleRows(begin, n) += (scale / static_cast<double>(n)) * (probs - targets);
  }
  return total / static_cast<double>(n);
}

Matrix domain_targets(Eigen::Index labeled, const std::vector<int>& pseudo,
                      const std::vector<int>& unlabeled, int num_domains) {
  Matrix z = Matrix::Zero(labeled + static_cast<Eigen::Index>(pseudo.size() + unlabeled.size()), num_domains);
  Eigen::Index row = 0;
  auto put = [&](int domain) {
    if (domain < 0 || domain >= num_domains) throw ShapeError("domain id out of discriminator range");
    z(row++, domain) = 1.0;
  };
  for (Eigen::Index i = 0; i < labeled; ++i) put(kLabeledDomain);
  for (int d : pseudo) put(d);
  for (int d : unlabeled) put(d);
  return z;
}

}  // namespace

LossReport evaluate_batch(const ModelBundle<double>& bundle, const TrainingBatch& batch,
                          const ObjectiveSpec& spec, double ramp, BundleGradients<double>* grads) {
  const TermWeights& w = spec.weights;
  const Eigen::Index nl = batch.labeled_x.rows();
  const Eigen::Index np = batch.pseudo_x.rows();
  const Eigen::Index nu = batch.unlabeled_x.rows();
  const Eigen::Index nm = batch.mixed.size();
  const Eigen::Index total = nl + np + nu + nm;
  if (batch.pseudo_domains.size() != static_cast<std::size_t>(np) ||
      batch.unlabeled_domains.size() != static_cast<std::size_t>(nu)) {
    throw ShapeError("training batch: domain id lists do not match sample counts");
  }

  LossReport report;
  report.ramp = ramp;
  if (total == 0) return report;

  const Eigen::Index input = bundle.spec().input_size();
  Matrix x(total, input);
  Eigen::Index row = 0;
  for (const Matrix* part : {&batch.labeled_x, &batch.pseudo_x, &batch.unlabeled_x, &batch.mixed.x}) {
    if (part->rows() == 0) continue;
    if (part->cols() != input) throw ConfigError("training batch: input width does not match backbone");
    x.middleRows(row, part->rows()) = *part;
    row += part->rows();
  }
  const Eigen::Index pseudo_begin = nl;
  const Eigen::Index unlabeled_begin = nl + np;
  const Eigen::Index mixed_begin = nl + np + nu;

  nn::Trace<double> f_trace, c_trace, m_trace, d_trace;
  const Matrix features = bundle.feature_extractor().forward(x, f_trace);
  const bool train = grads != nullptr;

  const bool mix_on_predictive = spec.mix_head == Head::predictive;
  const bool need_c = w.cls != 0.0 || w.ent != 0.0 || (w.cls_mix != 0.0 && mix_on_predictive);
  const bool need_m = w.cls_mix != 0.0 && !mix_on_predictive && nm > 0;
  const bool need_d = w.adv != 0.0 || (w.adv_mix != 0.0 && nm > 0);

  Matrix grad_features = Matrix::Zero(total, features.cols());

  if (need_c) {
    const Matrix logits = bundle.predictive_classifier().forward(features, c_trace);
    const Matrix log_probs = nn::log_softmax_rows(logits);
    Matrix grad = Matrix::Zero(logits.rows(), logits.cols());
    Matrix* g = train ? &grad : nullptr;
    if (w.cls != 0.0) {
      report.cls = cross_entropy_rows(logits, log_probs, 0, batch.labeled_y, w.cls, g) +
                   cross_entropy_rows(logits, log_probs, pseudo_begin, batch.pseudo_y, w.cls, g);
    }
    if (w.ent != 0.0 && nu > 0) {
      const Matrix lp = log_probs.middleRows(unlabeled_begin, nu);
      const Matrix p = lp.array().exp().matrix();
      const Vector h = -(p.array() * lp.array()).rowwise().sum().matrix();
      report.ent = h.mean();
      if (train) {
        // dH/dz_j = -p_j (log p_j + H)
        const Matrix dh = -(p.array() * (lp.colwise() + h).array()).matrix();
        grad.middleRows(unlabeled_begin, nu) += (w.ent / static_cast<double>(nu)) * dh;
      }
    }
    if (w.cls_mix != 0.0 && mix_on_predictive) {
      report.cls_mix = cross_entropy_rows(logits, log_probs, mixed_begin, batch.mixed.y, w.cls_mix, g);
    }
    if (train) {
      grad_features += bundle.predictive_classifier().backward(c_trace, grad, grads->predictive_classifier);
      grads->predictive_touched = true;
    }
  }

  if (need_m) {
    const Matrix mixed_features = features.middleRows(mixed_begin, nm);
    const Matrix logits = bundle.generalizable_classifier().forward(mixed_features, m_trace);
    const Matrix log_probs = nn::log_softmax_rows(logits);
    Matrix grad = Matrix::Zero(logits.rows(), logits.cols());
    report.cls_mix = cross_entropy_rows(logits, log_probs, 0, batch.mixed.y, w.cls_mix, train ? &grad : nullptr);
    if (train) {
      grad_features.middleRows(mixed_begin, nm) +=
          bundle.generalizable_classifier().backward(m_trace, grad, grads->generalizable_classifier);
      grads->generalizable_touched = true;
    }
  }

  if (need_d) {
    const Matrix logits = bundle.domain_discriminator().forward(features, d_trace);
    const Matrix log_probs = nn::log_softmax_rows(logits);
    Matrix grad = Matrix::Zero(logits.rows(), logits.cols());
    Matrix* g = train ? &grad : nullptr;
    if (w.adv != 0.0) {
      const Matrix z = domain_targets(nl, batch.pseudo_domains, batch.unlabeled_domains, bundle.num_domains());
      report.adv = cross_entropy_rows(logits, log_probs, 0, z, w.adv, g);
    }
    if (w.adv_mix != 0.0 && nm > 0) {
      if (batch.mixed.z.cols() != bundle.num_domains()) throw ShapeError("mixed domain labels have wrong arity");
      report.adv_mix = cross_entropy_rows(logits, log_probs, mixed_begin, batch.mixed.z, w.adv_mix, g);
    }
    if (train) {
      grad_features += spec.feature_adv_scale *
                       bundle.domain_discriminator().backward(d_trace, grad, grads->domain_discriminator);
      grads->discriminator_touched = true;
    }
  }

  if (train) {
    bundle.feature_extractor().backward(f_trace, grad_features, grads->feature_extractor);
    grads->extractor_touched = true;
  }

  const Objectives obj = assemble_objectives(report);
  report.total_model = obj.model;
  report.total_discriminator = obj.discriminator;
  return report;
}

}  // namespace ssdg
