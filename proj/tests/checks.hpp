#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "ssdg/dapl.hpp"
#include "ssdg/losses.hpp"
#include "ssdg/mixup.hpp"
#include "ssdg/trainer.hpp"

// Measurements shared by the unit tests and the acceptance binary.
namespace check {

using namespace ssdg;

struct Named {
  std::string name;
  double value = 0.0;
};

inline std::vector<Matrix*> parameter_ptrs(ModelBundle<double>& bundle, const std::set<std::string>& components) {
  std::vector<Matrix*> out;
  for (auto& p : bundle.named_parameters()) {
    if (components.empty() || components.contains(p.component)) out.push_back(p.value);
  }
  return out;
}

inline std::vector<const Matrix*> gradient_ptrs(ModelBundle<double>& bundle, const BundleGradients<double>& grads,
                                                const std::set<std::string>& components) {
  const auto flat = grads.flat();
  const auto params = bundle.named_parameters();
  std::vector<const Matrix*> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (components.empty() || components.contains(params[i].component)) out.push_back(flat[i]);
  }
  return out;
}

inline double fd_error(ModelBundle<double>& bundle, const TrainingBatch& batch, const ObjectiveSpec& spec,
                       double ramp, double LossReport::*field, const std::set<std::string>& components) {
  BundleGradients<double> grads = bundle.zero_gradients();
  evaluate_batch(bundle, batch, spec, ramp, &grads);
  const auto numeric = oracle::central_differences(
      parameter_ptrs(bundle, components), [&] { return evaluate_batch(bundle, batch, spec, ramp, nullptr).*field; },
      1e-5);
  return oracle::relative_error(gradient_ptrs(bundle, grads, components), numeric);
}

/// Relative error of every analytic gradient against central differences on
/// the toy bundle.
inline std::vector<Named> gradient_errors(std::uint64_t seed = 11) {
  ModelBundle<double> bundle = fixture::toy_bundle(seed);
  const TrainingBatch batch = fixture::toy_batch(seed + 1);
  using fixture::single_term;
  const std::set<std::string> all;
  std::vector<Named> out;
  out.push_back({"L_cls", fd_error(bundle, batch, single_term(&TermWeights::cls), 0.5, &LossReport::cls, all)});
  out.push_back({"L_adv", fd_error(bundle, batch, single_term(&TermWeights::adv), 0.5, &LossReport::adv, all)});
  out.push_back({"L_cls_mix", fd_error(bundle, batch, single_term(&TermWeights::cls_mix), 0.5, &LossReport::cls_mix, all)});
  out.push_back({"L_cls_mix(F_c)", fd_error(bundle, batch, single_term(&TermWeights::cls_mix, Head::predictive), 0.5,
                                            &LossReport::cls_mix, all)});
  out.push_back({"L_adv_mix", fd_error(bundle, batch, single_term(&TermWeights::adv_mix), 0.5, &LossReport::adv_mix, all)});
  out.push_back({"L_ent", fd_error(bundle, batch, single_term(&TermWeights::ent), 0.5, &LossReport::ent, all)});
  const double ramp = 0.6;
  const ObjectiveSpec train = training_objective(ramp, AblationFlags{});
  out.push_back({"model objective",
                 fd_error(bundle, batch, train, ramp, &LossReport::total_model,
                          {"feature_extractor", "predictive_classifier", "generalizable_classifier"})});
  out.push_back({"discriminator objective",
                 fd_error(bundle, batch, train, ramp, &LossReport::total_discriminator, {"domain_discriminator"})});
  return out;
}

struct ReversalResult {
  double max_negation_error = 0.0;       // |g_rev + g_plain| over F_g
  double max_discriminator_error = 0.0;  // F_d is never reversed
  double max_abs_scale_zero = 0.0;       // F_g gradient at scale 0
  double plain_norm = 0.0;
};

inline ReversalResult reversal_contract(std::uint64_t seed = 21) {
  const ModelBundle<double> bundle = fixture::toy_bundle(seed);
  std::mt19937_64 rng(seed);
  TrainingBatch batch;
  batch.labeled_x = fixture::gaussian(4, 3, rng);
  batch.labeled_y = fixture::one_hot_rows({0, 1, 2, 0}, 3);
  batch.unlabeled_x = fixture::gaussian(3, 3, rng);
  batch.unlabeled_domains = {1, 1, 1};

  BundleGradients<double> plain = bundle.zero_gradients();
  evaluate_batch(bundle, batch, fixture::single_term(&TermWeights::adv), 1.0, &plain);

  Matrix x(7, 3);
  x << batch.labeled_x, batch.unlabeled_x;
  const Matrix z = fixture::one_hot_rows({0, 0, 0, 0, 1, 1, 1}, 2);
  const BundleGradients<double> reversed = domain_gradients(bundle, x, z, 1.0);
  const BundleGradients<double> zero = domain_gradients(bundle, x, z, 0.0);

  ReversalResult r;
  for (std::size_t i = 0; i < plain.feature_extractor.size(); ++i) {
    r.max_negation_error = std::max(
        r.max_negation_error, (reversed.feature_extractor[i] + plain.feature_extractor[i]).cwiseAbs().maxCoeff());
    r.max_abs_scale_zero = std::max(r.max_abs_scale_zero, zero.feature_extractor[i].cwiseAbs().maxCoeff());
    r.plain_norm += plain.feature_extractor[i].squaredNorm();
  }
  for (std::size_t i = 0; i < plain.domain_discriminator.size(); ++i) {
    r.max_discriminator_error =
        std::max(r.max_discriminator_error,
                 (reversed.domain_discriminator[i] - plain.domain_discriminator[i]).cwiseAbs().maxCoeff());
  }
  r.plain_norm = std::sqrt(r.plain_norm);
  return r;
}

/// Outcome of one randomized property: cases run and the first failure.
struct Property {
  std::string name;
  int cases = 0;
  int failures = 0;
  std::string first_failure;

  void fail(const std::string& why) {
    if (failures++ == 0) first_failure = why;
  }
  bool ok() const { return failures == 0 && cases > 0; }
};

inline Vector random_probabilities(int classes, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.7, 1.0);
  Vector v(classes);
  for (int i = 0; i < classes; ++i) v(i) = g(rng) + 1e-12;
  return v / v.sum();
}

inline Vector random_similarities(int classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(classes);
  for (int i = 0; i < classes; ++i) v(i) = u(rng);
  return v;
}

/// Scores whose entries repeat often, so ties are common.
inline Vector tie_prone(int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> level(0, 3);
  Vector v(classes);
  for (int i = 0; i < classes; ++i) v(i) = 0.25 * level(rng);
  return v;
}

inline std::vector<ScoredSample> random_pass(int domains, int classes, int dim, int count, std::mt19937_64& rng,
                                             bool ties) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> dom(1, domains);
  std::vector<ScoredSample> out;
  for (int i = 0; i < count; ++i) {
    ScoredSample s;
    s.id = SampleId{static_cast<std::uint64_t>(i)};
    s.domain_id = dom(rng);
    s.feature = Vector(dim);
    for (int k = 0; k < dim; ++k) s.feature(k) = n(rng);
    s.q = ties ? tie_prone(classes, rng) : random_probabilities(classes, rng);
    out.push_back(std::move(s));
  }
  return out;
}

struct Top {
  const ScoredSample* sample = nullptr;
};

/// (domain, class) → top sample of a pass by exhaustive search: argmax q is
/// the class, highest max q wins, earlier sample on ties.
inline std::map<std::pair<int, int>, const ScoredSample*> top_samples(const std::vector<ScoredSample>& pass) {
  std::map<std::pair<int, int>, const ScoredSample*> top;
  for (std::size_t i = 0; i < pass.size(); ++i) {
    const ScoredSample& s = pass[i];
    const std::pair<int, int> key{s.domain_id, oracle::first_max(s.q)};
    bool beaten = false;
    for (std::size_t j = 0; j < pass.size() && !beaten; ++j) {
      const ScoredSample& o = pass[j];
      if (j == i || o.domain_id != s.domain_id || oracle::first_max(o.q) != key.second) continue;
      beaten = o.q.maxCoeff() > s.q.maxCoeff() || (o.q.maxCoeff() == s.q.maxCoeff() && j < i);
    }
    if (!beaten) top[key] = &s;
  }
  return top;
}

inline std::vector<Property> dapl_properties(int cases = 1000, std::uint64_t seed = 31) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> classes_dist(2, 9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Property> out;

  {
    Property p{"blend_scores gamma=1 is q, gamma=0 is psi"};
    for (int i = 0; i < cases; ++i, ++p.cases) {
      const int c = classes_dist(rng);
      const Vector q = random_probabilities(c, rng);
      const Vector psi = random_similarities(c, rng);
      if (blend_scores(q, psi, 1.0) != q) p.fail("gamma=1 differs from q at case " + std::to_string(i));
      if (blend_scores(q, psi, 0.0) != psi) p.fail("gamma=0 differs from psi at case " + std::to_string(i));
      const double g = unit(rng);
      const Vector s = blend_scores(q, psi, g);
      for (int k = 0; k < c; ++k) {
        if (std::abs(s(k) - (g * q(k) + (1.0 - g) * psi(k))) > 1e-15) p.fail("interpolant off at case " + std::to_string(i));
      }
    }
    out.push_back(p);
  }

  {
    Property p{"confident set shrinks as delta grows"};
    for (int i = 0; i < cases; ++i, ++p.cases) {
      const int c = classes_dist(rng);
      std::vector<Vector> scores;
      for (int k = 0; k < 40; ++k) {
        scores.push_back(blend_scores(random_probabilities(c, rng), random_similarities(c, rng), unit(rng)));
      }
      double lo = 0.01 + 0.9 * unit(rng);
      double hi = 0.01 + 0.9 * unit(rng);
      if (lo > hi) std::swap(lo, hi);
      for (std::size_t k = 0; k < scores.size(); ++k) {
        const auto at_hi = assign_pseudo_label(scores[k], hi);
        const auto at_lo = assign_pseudo_label(scores[k], lo);
        const bool oracle_hi = scores[k].maxCoeff() > hi;
        if (at_hi.has_value() != oracle_hi) p.fail("rule disagrees with max s > delta at case " + std::to_string(i));
        if (at_hi && !at_lo) p.fail("confident at delta=" + std::to_string(hi) + " but not at " + std::to_string(lo));
        if (at_hi && at_lo && at_hi->class_index != at_lo->class_index) p.fail("label depends on delta");
      }
    }
    out.push_back(p);
  }

  {
    Property p{"ties go to the lowest index"};
    for (int i = 0; i < cases; ++i, ++p.cases) {
      const int c = classes_dist(rng);
      const Vector s = tie_prone(c, rng) + Vector::Constant(c, 0.3);
      const int expect = oracle::first_max(s);
      if (argmax_lowest(s) != expect) p.fail("argmax_lowest at case " + std::to_string(i));
      const auto label = assign_pseudo_label(s, 0.2);
      if (!label || label->class_index != expect) p.fail("assign_pseudo_label at case " + std::to_string(i));
      else if (label->one_hot != one_hot(expect, c)) p.fail("one-hot at case " + std::to_string(i));
      // Same pass twice gives the same bank; the earlier of tied samples wins.
      const auto pass = random_pass(2, c, 3, 12, rng, true);
      const ClassRepBank a = update_bank(ClassRepBank(2, c, 3), pass, RepPolicy::one);
      const ClassRepBank b = update_bank(ClassRepBank(2, c, 3), pass, RepPolicy::one);
      if (!(a == b)) p.fail("update_bank not deterministic at case " + std::to_string(i));
      for (const auto& [key, top] : top_samples(pass)) {
        if (a.reps(key.first).row(key.second).transpose() != top->feature) {
          p.fail("bank row is not the first top sample at case " + std::to_string(i));
        }
      }
    }
    out.push_back(p);
  }

  {
    Property p{"ensemble row is the mean of admitted features"};
    for (int i = 0; i < cases; ++i, ++p.cases) {
      const int c = classes_dist(rng);
      const int domains = 1 + static_cast<int>(rng() % 3);
      const int dim = 2 + static_cast<int>(rng() % 4);
      ClassRepBank bank(domains, c, dim);
      std::map<std::pair<int, int>, std::vector<Vector>> admitted;
      std::map<std::pair<int, int>, double> best;
      const int passes = 1 + static_cast<int>(rng() % 5);
      for (int pass_index = 0; pass_index < passes; ++pass_index) {
        const auto pass = random_pass(domains, c, dim, 5 + static_cast<int>(rng() % 30), rng, unit(rng) < 0.3);
        bank = update_bank(std::move(bank), pass, RepPolicy::ensemble);
        for (const auto& [key, top] : top_samples(pass)) {
          const double conf = top->q.maxCoeff();
          const auto it = best.find(key);
          if (it == best.end() || conf > it->second) {
            best[key] = conf;
            admitted[key].push_back(top->feature);
          }
        }
        for (int d = 1; d <= domains; ++d) {
          for (int k = 0; k < c; ++k) {
            const auto it = admitted.find({d, k});
            if (it == admitted.end()) {
              if (bank.has_row(d, k) || bank.reps(d).row(k).norm() != 0.0) p.fail("row present without a sample");
              continue;
            }
            Vector mean = Vector::Zero(dim);
            for (const Vector& v : it->second) mean += v;
            mean /= static_cast<double>(it->second.size());
            if ((bank.reps(d).row(k).transpose() - mean).cwiseAbs().maxCoeff() > 1e-12) {
              p.fail("row differs from the admitted mean at case " + std::to_string(i));
            }
            if (bank.best_confidence(d, k) != best[{d, k}]) p.fail("best confidence at case " + std::to_string(i));
            if (bank.candidates(d, k).size() != it->second.size()) p.fail("candidate count at case " + std::to_string(i));
          }
        }
      }
    }
    out.push_back(p);
  }

  {
    Property p{"ensemble update is idempotent"};
    for (int i = 0; i < cases; ++i, ++p.cases) {
      const int c = classes_dist(rng);
      ClassRepBank bank(2, c, 4);
      bank = update_bank(std::move(bank), random_pass(2, c, 4, 20, rng, false), RepPolicy::ensemble);
      const auto pass = random_pass(2, c, 4, 20, rng, unit(rng) < 0.3);
      const ClassRepBank once = update_bank(bank, pass, RepPolicy::ensemble);
      const ClassRepBank twice = update_bank(once, pass, RepPolicy::ensemble);
      if (!(once == twice)) p.fail("second identical pass changed the bank at case " + std::to_string(i));
    }
    out.push_back(p);
  }
  return out;
}

inline std::vector<Named> closed_form_errors() {
  std::vector<Named> out;
  for (int c : {2, 3, 5, 7, 10, 65}) {
    const Matrix uniform = Matrix::Constant(4, c, 1.0 / c);
    Matrix targets = Matrix::Zero(4, c);
    for (int i = 0; i < 4; ++i) targets(i, (i * 3) % c) = 1.0;
    out.push_back({"cross-entropy C=" + std::to_string(c), std::abs(soft_cross_entropy(uniform, targets) - std::log(c))});
    out.push_back({"entropy C=" + std::to_string(c), std::abs(entropy_loss(uniform) - std::log(c))});
  }
  for (int r : {1, 3, 12, 30}) {
    out.push_back({"ramp(0) R=" + std::to_string(r), std::abs(ramp_weight(0, r) - std::exp(-5.0))});
    out.push_back({"ramp(R) R=" + std::to_string(r), std::abs(ramp_weight(r, r) - 1.0)});
    out.push_back({"ramp(2R) R=" + std::to_string(r), std::abs(ramp_weight(2 * r, r) - 1.0)});
  }
  // Zeroed heads predict uniformly, so both terms of L_cls equal ln C.
  ModelBundle<double> bundle = fixture::toy_bundle(5);
  bundle.zero_class_heads();
  const LossReport r = evaluate_batch(bundle, fixture::toy_batch(6), training_objective(1.0, AblationFlags{}), 1.0, nullptr);
  out.push_back({"zero heads L_cls", std::abs(r.cls - 2.0 * std::log(3.0))});
  out.push_back({"zero heads L_ent", std::abs(r.ent - std::log(3.0))});
  return out;
}

struct BetaStats {
  double alpha = 0.0;
  double mean = 0.0;
  double ks = std::numeric_limits<double>::quiet_NaN();
};

inline BetaStats beta_stats(double alpha, std::size_t draws = 100000, std::uint64_t seed = 41) {
  std::mt19937_64 rng(seed);
  const std::vector<double> lam = sample_lambda(alpha, draws, rng);
  BetaStats s{alpha};
  for (double v : lam) s.mean += v;
  s.mean /= static_cast<double>(lam.size());
  if (alpha == 1.0) s.ks = oracle::ks_uniform(lam);
  return s;
}

/// Invariant checks over a training run.
class Bookkeeper : public TrainObserver {
 public:
  explicit Bookkeeper(std::size_t total, std::size_t labeled) : total_(total), labeled_(labeled) {}

  void on_bank_read(int epoch, int domain, int written) override {
    ++reads_;
    if (written < 0) {
      fail("domain " + std::to_string(domain) + " read at epoch " + std::to_string(epoch) + " before any write");
      return;
    }
    if (written >= epoch) fail("bank read at epoch " + std::to_string(epoch) + " sees a write from epoch " + std::to_string(written));
    const auto [it, first] = first_read_.try_emplace({domain, written}, epoch);
    if (first && epoch != written + 1) {
      fail("write at epoch " + std::to_string(written) + " first read at epoch " + std::to_string(epoch));
    }
  }
  void on_bank_write(int epoch) override { writes_.push_back(epoch); }
  void on_epoch_end(const EpochSummary& summary, const TrainState& state, const ClassRepBank&) override {
    ++epochs_;
    if (state.total_size() != total_) fail("|S_l|+|S_u|+|S_p| changed at epoch " + std::to_string(summary.epoch));
    if (state.labeled_set().size() != labeled_) fail("|S_l| changed at epoch " + std::to_string(summary.epoch));
    if (state.pseudo_set().size() < last_pseudo_) fail("S_p shrank at epoch " + std::to_string(summary.epoch));
    last_pseudo_ = state.pseudo_set().size();
    for (const PseudoLabeledSample& p : state.pseudo_set()) {
      const auto key = to_underlying(p.sample.id);
      const std::pair<int, int> now{p.class_index(), p.epoch_assigned};
      const auto [it, inserted] = labels_.try_emplace(key, now);
      if (!inserted && it->second != now) fail("pseudo-label of sample " + std::to_string(key) + " changed");
    }
    for (const auto& [key, value] : labels_) {
      if (!std::any_of(state.pseudo_set().begin(), state.pseudo_set().end(),
                       [&](const PseudoLabeledSample& p) { return to_underlying(p.sample.id) == key; })) {
        fail("sample " + std::to_string(key) + " left S_p");
      }
    }
  }

  int reads() const { return reads_; }
  const std::vector<int>& writes() const { return writes_; }
  int epochs() const { return epochs_; }
  std::size_t migrated() const { return labels_.size(); }
  const std::vector<std::string>& failures() const { return failures_; }

 private:
  void fail(std::string why) { failures_.push_back(std::move(why)); }

  std::size_t total_;
  std::size_t labeled_;
  std::size_t last_pseudo_ = 0;
  int reads_ = 0;
  int epochs_ = 0;
  std::vector<int> writes_;
  std::map<std::pair<int, int>, int> first_read_;
  std::map<std::uint64_t, std::pair<int, int>> labels_;
  std::vector<std::string> failures_;
};

}  // namespace check
