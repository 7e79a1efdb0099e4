#include <doctest.h>

#include "ssdg/config.hpp"
#include "ssdg/core.hpp"

using namespace ssdg;

namespace {

std::vector<Sample> make(std::uint64_t first, int count, int domain) {
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    Sample s{SampleId{first + static_cast<std::uint64_t>(i)}, Vector::Constant(2, i), std::nullopt, domain};
    if (domain == kLabeledDomain) s.class_label = i % 2;
    out.push_back(s);
  }
  return out;
}

PseudoLabeledSample confident(const Sample& s, int cls) { return {s, one_hot(cls, 2), 0.9, 1}; }

}  // namespace

TEST_CASE("migration moves samples from S_u to S_p") {
  TrainState state(make(0, 3, 0), make(100, 4, 1));
  const std::vector<PseudoLabeledSample> move{confident(state.unlabeled_set()[1], 1),
                                              confident(state.unlabeled_set()[3], 0)};
  state = migrate_confident(std::move(state), move);
  CHECK(state.labeled_set().size() == 3);
  CHECK(state.unlabeled_set().size() == 2);
  CHECK(state.pseudo_set().size() == 2);
  CHECK(state.total_size() == 7);
  CHECK(state.pseudo_set()[0].class_index() == 1);
  CHECK(to_underlying(state.unlabeled_set()[0].id) == 100);
  CHECK(to_underlying(state.unlabeled_set()[1].id) == 102);
  CHECK_THROWS_AS(migrate_confident(state, move), IdentityError);
}

TEST_CASE("foreign and duplicate ids are rejected") {
  const TrainState state(make(0, 2, 0), make(10, 2, 1));
  const Sample stranger{SampleId{99}, Vector::Zero(2), std::nullopt, 1};
  const std::vector<PseudoLabeledSample> foreign{confident(stranger, 0)};
  CHECK_THROWS_AS(migrate_confident(state, foreign), IdentityError);
  const std::vector<PseudoLabeledSample> twice{confident(state.unlabeled_set()[0], 0),
                                               confident(state.unlabeled_set()[0], 1)};
  CHECK_THROWS_AS(migrate_confident(state, twice), IdentityError);
  CHECK_THROWS(TrainState(make(0, 2, 0), make(1, 2, 1)));
}

TEST_CASE("set invariants are enforced") {
  auto unlabeled_with_label = make(10, 2, 1);
  unlabeled_with_label[0].class_label = 1;
  CHECK_THROWS(TrainState(make(0, 2, 0), unlabeled_with_label));
  auto labeled_in_domain_one = make(0, 2, 0);
  labeled_in_domain_one[1].domain_id = 1;
  CHECK_THROWS(TrainState(labeled_in_domain_one, make(10, 2, 1)));
  CHECK_THROWS(TrainState(make(0, 2, 0), make(10, 2, 0)));
}

TEST_CASE("one-hot and policies") {
  CHECK(one_hot(2, 4) == (Vector(4) << 0, 0, 1, 0).finished());
  CHECK_THROWS(one_hot(4, 4));
  CHECK(parse_rep_policy("ensemble") == RepPolicy::ensemble);
  CHECK(to_string(RepPolicy::one) == "one");
  CHECK_THROWS_AS(parse_rep_policy("many"), ConfigError);
}

TEST_CASE("config validation names the field") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.5;
  try {
    c.validate();
    FAIL("accepted gamma 1.5");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("gamma", 0) == 0);
  }
  c = TrainConfig{};
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.delta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("learning rate schedule and ramp length") {
  TrainConfig c;
  c.epochs = 60;
  CHECK(c.learning_rate_at(29) == doctest::Approx(0.01));
  CHECK(c.learning_rate_at(30) == doctest::Approx(0.001));
  CHECK(c.learning_rate_at(50) == doctest::Approx(0.0001));
  CHECK(c.effective_ramp_epochs() == 18);
  c.ramp_epochs = 5;
  CHECK(c.effective_ramp_epochs() == 5);
}

TEST_CASE("config text round trip") {
  TrainConfig c;
  c.gamma = 0.3;
  c.delta = 0.36;
  c.rep_policy = RepPolicy::one;
  c.flags.use_mixup = false;
  c.lr_decay_epochs = {5};
  c.seed = 123456789012345ULL;
  const TrainConfig back = train_config_from_text(to_text(c));
  CHECK(back == c);
  CHECK(config_hash(back) == config_hash(c));
  c.gamma = 0.31;
  CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("key value parsing") {
  const KeyValues kv = KeyValues::parse("# comment\ngamma = 0.2\ndelta=0.3 # trailing\ngamma = 0.25\n");
  CHECK(kv.get("gamma") == "0.25");
  CHECK(kv.get("delta") == "0.3");
  CHECK_FALSE(kv.get("alpha").has_value());
  TrainConfig c;
  CHECK(apply_train_key(c, "gamma", "0.2"));
  CHECK_FALSE(apply_train_key(c, "colour", "red"));
  CHECK_THROWS_AS(apply_train_key(c, "epochs", "many"), ConfigError);
  CHECK(split_list("a, b,c") == std::vector<std::string>{"a", "b", "c"});
}
