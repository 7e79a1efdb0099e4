#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "ssdg/losses.hpp"
#include "ssdg/model.hpp"

namespace fixture {

using namespace ssdg;

/// 82 parameters: F_g 3-4-4, F_c and F_m 4-3, F_d 4-2-2.
inline ModelBundle<double> toy_bundle(std::uint64_t seed) {
  BackboneSpec spec;
  spec.input_dim = 3;
  spec.hidden_dim = 4;
  spec.feature_dim = 4;
  spec.discriminator_hidden = 2;
  return ModelBundle<double>(spec, 3, 2, seed);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ssdg-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Matrix one_hot_rows(const std::vector<int>& labels, int classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return m;
}

/// Labeled, pseudo-labeled, unlabeled and mixed rows for the toy bundle.
inline TrainingBatch toy_batch(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TrainingBatch b;
  b.labeled_x = gaussian(3, 3, rng);
  b.labeled_y = one_hot_rows({0, 1, 2}, 3);
  b.pseudo_x = gaussian(2, 3, rng);
  b.pseudo_y = one_hot_rows({2, 0}, 3);
  b.pseudo_domains = {1, 1};
  b.unlabeled_x = gaussian(2, 3, rng);
  b.unlabeled_domains = {1, 1};
  const Vector lam = (Vector(3) << 0.3, 0.75, 0.55).finished();
  b.mixed.lam = lam;
  b.mixed.x = Matrix(3, 3);
  b.mixed.y = Matrix(3, 3);
  b.mixed.z = Matrix(3, 2);
  for (int i = 0; i < 3; ++i) {
    const int p = i % 2;
    b.mixed.x.row(i) = lam(i) * b.labeled_x.row(i) + (1.0 - lam(i)) * b.pseudo_x.row(p);
    b.mixed.y.row(i) = lam(i) * b.labeled_y.row(i) + (1.0 - lam(i)) * b.pseudo_y.row(p);
    b.mixed.z.row(i) << lam(i), 1.0 - lam(i);
  }
  return b;
}

/// Only `term` switched on; plain (unreversed) adversarial gradient.
inline ObjectiveSpec single_term(double TermWeights::*term, Head mix_head = Head::generalizable) {
  ObjectiveSpec spec;
  spec.weights = {0.0, 0.0, 0.0, 0.0, 0.0};
  spec.weights.*term = 1.0;
  spec.feature_adv_scale = 1.0;
  spec.mix_head = mix_head;
  return spec;
}

}  // namespace fixture
