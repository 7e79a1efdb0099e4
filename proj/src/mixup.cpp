#include "ssdg/mixup.hpp"

#include <algorithm>
#include <numeric>

namespace ssdg {

std::vector<double> sample_lambda(double alpha, std::size_t count, std::mt19937_64& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("alpha: Beta parameter must be finite and > 0");
  }
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> out;
  out.reserve(count);
  while (out.size() < count) {
    const double a = gamma(rng);
    const double b = gamma(rng);
    const double sum = a + b;
    if (!(sum > 0.0)) continue;
    out.push_back(a / sum);
  }
  return out;
}

MixedElement mix_pair(const Sample& labeled, const PseudoLabeledSample& pseudo, double lam,
                      int num_domains) {
  if (!(lam >= 0.0 && lam <= 1.0)) throw ShapeError("mix_pair: lam outside [0, 1]");
  if (!labeled.class_label) throw ShapeError("mix_pair: labeled sample without label");
  const Eigen::Index classes = pseudo.pseudo_label.size();
  if (*labeled.class_label < 0 || *labeled.class_label >= classes) {
    throw ShapeError("mix_pair: class label arity mismatch");
  }
  if (labeled.input.size() != pseudo.sample.input.size()) {
    throw ShapeError("mix_pair: input sizes differ");
  }
  MixedElement out;
  out.lam = lam;
  out.x = lam * labeled.input + (1.0 - lam) * pseudo.sample.input;
  out.y = lam * one_hot(*labeled.class_label, static_cast<int>(classes)) +
          (1.0 - lam) * pseudo.pseudo_label;
  out.z = lam * one_hot(labeled.domain_id, num_domains) +
          (1.0 - lam) * one_hot(pseudo.sample.domain_id, num_domains);
  return out;
}

namespace {

MixedBatch allocate(Eigen::Index rows, Eigen::Index input, int classes, int domains) {
  return {Matrix(rows, input), Matrix(rows, classes), Matrix(rows, domains), Vector(rows)};
}

void store(MixedBatch& batch, Eigen::Index row, const MixedElement& e) {
  batch.x.row(row) = e.x.transpose();
  batch.y.row(row) = e.y.transpose();
  batch.z.row(row) = e.z.transpose();
  batch.lam(row) = e.lam;
}

}  // namespace

MixedBatch build_mixed_batch(std::span<const Sample> labeled,
                             std::span<const PseudoLabeledSample> pseudo, double alpha,
                             int num_classes, int num_domains, std::mt19937_64& rng) {
  if (labeled.empty() || pseudo.empty()) return {};
  const auto count = static_cast<Eigen::Index>(labeled.size());

  std::vector<std::size_t> partner(labeled.size());
  if (pseudo.size() >= labeled.size()) {
    std::vector<std::size_t> order(pseudo.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::copy_n(order.begin(), labeled.size(), partner.begin());
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pseudo.size() - 1);
    for (auto& p : partner) p = pick(rng);
  }
  const std::vector<double> lam = sample_lambda(alpha, labeled.size(), rng);

  MixedBatch batch = allocate(count, labeled.front().input.size(), num_classes, num_domains);
  for (Eigen::Index i = 0; i < count; ++i) {
    store(batch, i, mix_pair(labeled[i], pseudo[partner[i]], lam[i], num_domains));
  }
  return batch;
}

MixedBatch pure_batch(std::span<const Sample> labeled, std::span<const PseudoLabeledSample> pseudo,
                      int num_classes, int num_domains) {
  const auto rows = static_cast<Eigen::Index>(labeled.size() + pseudo.size());
  if (rows == 0) return {};
  const Eigen::Index input =
      labeled.empty() ? pseudo.front().sample.input.size() : labeled.front().input.size();
  MixedBatch batch = allocate(rows, input, num_classes, num_domains);
  Eigen::Index row = 0;
  for (const Sample& s : labeled) {
    store(batch, row++, {s.input, one_hot(s.class_label.value(), num_classes),
                         one_hot(s.domain_id, num_domains), 1.0});
  }
  for (const PseudoLabeledSample& p : pseudo) {
    store(batch, row++, {p.sample.input, p.pseudo_label, one_hot(p.sample.domain_id, num_domains), 0.0});
  }
  return batch;
}

}  // namespace ssdg
