#pragma once

#include <random>
#include <span>
#include <vector>

#include "ssdg/core.hpp"

namespace ssdg {

/// Interpolated inputs with soft class and domain labels. Row i of x, y and z
/// all use lam[i].
struct MixedBatch {
  Matrix x;
  Matrix y;
  Matrix z;
  Vector lam;

  Eigen::Index size() const { return x.rows(); }
  bool empty() const { return x.rows() == 0; }
};

struct MixedElement {
  Vector x;
  Vector y;
  Vector z;
  double lam = 1.0;
};

/// `count` independent draws from the symmetric Beta(alpha, alpha).
std::vector<double> sample_lambda(double alpha, std::size_t count, std::mt19937_64& rng);

/// Convex combination of a labeled and a pseudo-labeled sample with one shared
/// lam for input, class label and domain label.
MixedElement mix_pair(const Sample& labeled, const PseudoLabeledSample& pseudo, double lam,
                      int num_domains);

/// Pairs every labeled sample with a uniformly drawn pseudo-labeled sample
/// (without replacement when the pseudo batch is large enough). An empty
/// pseudo batch yields an empty result.
MixedBatch build_mixed_batch(std::span<const Sample> labeled,
                             std::span<const PseudoLabeledSample> pseudo, double alpha,
                             int num_classes, int num_domains, std::mt19937_64& rng);

/// Unmixed samples in MixedBatch form: labeled rows carry lam = 1, pseudo rows
/// lam = 0. Used when mixup is ablated so the generalizable head still trains.
MixedBatch pure_batch(std::span<const Sample> labeled, std::span<const PseudoLabeledSample> pseudo,
                      int num_classes, int num_domains);

}  // namespace ssdg
