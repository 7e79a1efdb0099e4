#include <doctest.h>

#include "checks.hpp"

using namespace ssdg;

TEST_CASE("randomized DAPL properties") {
  for (const check::Property& p : check::dapl_properties(1000)) {
    INFO(p.name << ": " << p.first_failure);
    CHECK(p.cases >= 1000);
    CHECK(p.failures == 0);
  }
}

TEST_CASE("cosine similarity") {
  const Vector a = (Vector(3) << 1, 0, 0).finished();
  const Vector b = (Vector(3) << 0, 2, 0).finished();
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
  CHECK(cosine_similarity(a, -3.0 * a) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_similarity(a, Vector::Zero(3)), DegenerateVectorError);
  CHECK_THROWS_AS(cosine_similarity(a, Vector::Zero(2)), ShapeError);
}

TEST_CASE("similarity needs a complete bank") {
  ClassRepBank bank(1, 2, 2);
  const Vector f = (Vector(2) << 1, 1).finished();
  CHECK_THROWS_AS(similarity_vector(f, bank, 1), BankNotReadyError);
  bank.set_row(1, 0, (Vector(2) << 1, 0).finished());
  CHECK_FALSE(bank.ready(1));
  bank.set_row(1, 1, (Vector(2) << 0, 1).finished());
  CHECK(bank.ready(1));
  const Vector psi = similarity_vector(f, bank, 1);
  CHECK(psi(0) == doctest::Approx(std::sqrt(0.5)));
  CHECK(psi(1) == doctest::Approx(std::sqrt(0.5)));
  const SimilarityFn dot = [](const Vector& x, const Vector& y) { return x.dot(y); };
  CHECK(similarity_vector(f, bank, 1, dot)(0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(similarity_vector(f, bank, 2), ShapeError);
}

TEST_CASE("pseudo-label threshold is strict") {
  const Vector s = (Vector(3) << 0.24, 0.1, 0.2).finished();
  CHECK_FALSE(assign_pseudo_label(s, 0.24).has_value());
  const auto label = assign_pseudo_label(s, 0.2399);
  REQUIRE(label.has_value());
  CHECK(label->class_index == 0);
  CHECK_THROWS_AS(assign_pseudo_label(s, 0.0), ConfigError);
  CHECK_THROWS_AS(assign_pseudo_label(Vector(), 0.1), ShapeError);
  CHECK_THROWS_AS(blend_scores(s, Vector::Zero(2), 0.5), ShapeError);
  CHECK_THROWS_AS(blend_scores(s, s, 1.5), ConfigError);
}

TEST_CASE("one policy replaces, ensemble only admits improvements") {
  auto sample = [](double conf, double feature) {
    ScoredSample s;
    s.domain_id = 1;
    s.q = (Vector(2) << conf, 1.0 - conf).finished();
    s.feature = Vector::Constant(2, feature);
    return s;
  };
  const std::vector<ScoredSample> first{sample(0.9, 1.0)};
  const std::vector<ScoredSample> weaker{sample(0.8, 3.0)};
  const std::vector<ScoredSample> stronger{sample(0.95, 5.0)};

  ClassRepBank one = update_bank(ClassRepBank(1, 2, 2), first, RepPolicy::one);
  one = update_bank(one, weaker, RepPolicy::one);
  CHECK(one.reps(1)(0, 0) == 3.0);

  ClassRepBank ens = update_bank(ClassRepBank(1, 2, 2), first, RepPolicy::ensemble);
  ens = update_bank(ens, weaker, RepPolicy::ensemble);
  CHECK(ens.reps(1)(0, 0) == 1.0);
  ens = update_bank(ens, stronger, RepPolicy::ensemble);
  CHECK(ens.reps(1)(0, 0) == 3.0);
  CHECK(ens.best_confidence(1, 0) == 0.95);
  CHECK_FALSE(ens.has_row(1, 1));
  CHECK(std::isinf(ens.best_confidence(1, 1)));
}

TEST_CASE("update_bank validates its input") {
  ScoredSample s;
  s.domain_id = 2;
  s.q = Vector::Constant(2, 0.5);
  s.feature = Vector::Ones(2);
  const std::vector<ScoredSample> bad_domain{s};
  CHECK_THROWS_AS(update_bank(ClassRepBank(1, 2, 2), bad_domain, RepPolicy::one), ShapeError);
  s.domain_id = 1;
  s.feature = Vector::Ones(3);
  const std::vector<ScoredSample> bad_dim{s};
  CHECK_THROWS_AS(update_bank(ClassRepBank(1, 2, 2), bad_dim, RepPolicy::ensemble), ShapeError);
  CHECK_THROWS_AS(ClassRepBank(0, 2, 2), ConfigError);
}
