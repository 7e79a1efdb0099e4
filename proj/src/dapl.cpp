#include "ssdg/dapl.hpp"

#include <algorithm>

namespace ssdg {

ClassRepBank::ClassRepBank(int num_unlabeled_domains, int num_classes, int feature_dim)
    : num_classes_(num_classes), feature_dim_(feature_dim) {
  if (num_unlabeled_domains < 1 || num_classes < 1 || feature_dim < 1) {
    throw ConfigError("ClassRepBank: dimensions must be positive");
  }
  domains_.resize(static_cast<std::size_t>(num_unlabeled_domains));
  for (DomainReps& d : domains_) {
    d.reps = Matrix::Zero(num_classes, feature_dim);
    d.present.assign(static_cast<std::size_t>(num_classes), false);
    d.best = Vector::Constant(num_classes, -std::numeric_limits<double>::infinity());
    d.candidates.resize(static_cast<std::size_t>(num_classes));
  }
}

const ClassRepBank::DomainReps& ClassRepBank::at(int domain) const {
  if (domain < 1 || domain > num_unlabeled_domains()) {
    throw ShapeError("bank: unlabeled domain id " + std::to_string(domain) + " out of range");
  }
  return domains_[static_cast<std::size_t>(domain - 1)];
}

ClassRepBank::DomainReps& ClassRepBank::at(int domain) {
  return const_cast<DomainReps&>(std::as_const(*this).at(domain));
}

bool ClassRepBank::ready(int domain) const {
  const auto& present = at(domain).present;
  return std::all_of(present.begin(), present.end(), [](bool p) { return p; });
}

void ClassRepBank::set_row(int domain, int cls, const Vector& rep) {
  DomainReps& d = at(domain);
  if (rep.size() != feature_dim_) throw ShapeError("bank: representation has wrong dimension");
  if (!rep.allFinite()) throw ShapeError("bank: representation is not finite");
  d.reps.row(cls) = rep.transpose();
  d.present[static_cast<std::size_t>(cls)] = true;
}

void ClassRepBank::raise_best_confidence(int domain, int cls, double confidence) {
  Vector& best = at(domain).best;
  best(cls) = std::max(best(cls), confidence);
}

void ClassRepBank::add_candidate(int domain, int cls, Vector feature) {
  if (feature.size() != feature_dim_) throw ShapeError("bank: candidate has wrong dimension");
  at(domain).candidates[static_cast<std::size_t>(cls)].push_back(std::move(feature));
}

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateVectorError("cosine similarity of a zero-norm vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Vector similarity_vector(const Vector& feature, const ClassRepBank& bank, int domain_id,
                         const SimilarityFn& sim) {
  if (domain_id < 1) throw ShapeError("similarity_vector: domain_id must be >= 1");
  if (!bank.ready(domain_id)) {
    throw BankNotReadyError("class representations of domain " + std::to_string(domain_id) +
                            " are incomplete");
  }
  const Matrix& reps = bank.reps(domain_id);
  Vector psi(bank.num_classes());
  for (int c = 0; c < bank.num_classes(); ++c) psi(c) = sim(feature, reps.row(c).transpose());
  return psi;
}

ClassRepBank update_bank(ClassRepBank bank, std::span<const ScoredSample> scored, RepPolicy policy) {
  const int domains = bank.num_unlabeled_domains();
  const int classes = bank.num_classes();
  // Index of the top sample per (domain, class) in this pass.
  std::vector<std::vector<const ScoredSample*>> top(
      static_cast<std::size_t>(domains), std::vector<const ScoredSample*>(static_cast<std::size_t>(classes)));

  for (const ScoredSample& s : scored) {
    if (s.q.size() != classes) throw ShapeError("update_bank: q has wrong length");
    if (s.feature.size() != bank.feature_dim()) throw ShapeError("update_bank: feature has wrong dimension");
    if (s.domain_id < 1 || s.domain_id > domains) throw ShapeError("update_bank: domain id out of range");
    const int cls = argmax_lowest(s.q);
    const ScoredSample*& slot = top[static_cast<std::size_t>(s.domain_id - 1)][static_cast<std::size_t>(cls)];
    if (slot == nullptr || s.confidence() > slot->confidence()) slot = &s;
  }

  for (int d = 1; d <= domains; ++d) {
    for (int c = 0; c < classes; ++c) {
      const ScoredSample* best = top[static_cast<std::size_t>(d - 1)][static_cast<std::size_t>(c)];
      if (best == nullptr) continue;
      const double confidence = best->confidence();
      if (policy == RepPolicy::one) {
        bank.set_row(d, c, best->feature);
        bank.raise_best_confidence(d, c, confidence);
        continue;
      }
      if (!(confidence > bank.best_confidence(d, c))) continue;
      bank.raise_best_confidence(d, c, confidence);
      bank.add_candidate(d, c, best->feature);
      Vector mean = Vector::Zero(bank.feature_dim());
      for (const Vector& v : bank.candidates(d, c)) mean += v;
      mean /= static_cast<double>(bank.candidates(d, c).size());
      bank.set_row(d, c, mean);
    }
  }
  return bank;
}

}  // namespace ssdg
