#include "ssdg/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "ssdg/checkpoint.hpp"
#include "ssdg/config.hpp"
#include "ssdg/serialization.hpp"

namespace ssdg {

namespace {

constexpr std::uint64_t kBatchStreamSalt = 0x9e3779b97f4a7c15ULL;
constexpr Eigen::Index kInferenceChunk = 512;

Matrix stack_inputs(std::span<const Sample> samples, Eigen::Index width) {
  Matrix x(static_cast<Eigen::Index>(samples.size()), width);
  for (std::size_t i = 0; i < samples.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = samples[i].input.transpose();
  return x;
}

bool uses_unlabeled(const AblationFlags& f) { return f.use_adversarial || f.use_entropy || f.mixup_all; }

void accumulate(LossReport& into, const LossReport& r) {
  into.cls += r.cls;
  into.adv += r.adv;
  into.cls_mix += r.cls_mix;
  into.adv_mix += r.adv_mix;
  into.ent += r.ent;
  into.total_model += r.total_model;
  into.total_discriminator += r.total_discriminator;
}

}  // namespace

Head inference_head(const AblationFlags& flags) {
  return flags.use_dual_classifier ? Head::generalizable : Head::predictive;
}

BackboneSpec backbone_for(const InputLayout& layout, const TrainConfig& config) {
  BackboneSpec spec;
  spec.hidden_dim = config.hidden_dim;
  spec.feature_dim = config.feature_dim;
  spec.conv_channels = config.conv_channels;
  spec.discriminator_hidden = config.hidden_dim;
  if (layout.kind == InputLayout::Kind::vector) {
    spec.kind = BackboneSpec::Kind::dense;
    spec.input_dim = layout.dim;
  } else {
    spec.kind = BackboneSpec::Kind::conv;
    spec.image = layout.image;
  }
  return spec;
}

double evaluate(const ModelBundle<double>& bundle, std::span<const Sample> domain, Head head) {
  if (domain.empty()) throw SchemaError("evaluate: empty domain");
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < domain.size(); begin += kInferenceChunk) {
    const auto chunk = domain.subspan(begin, std::min<std::size_t>(kInferenceChunk, domain.size() - begin));
    const Matrix probs = forward_class(bundle, stack_inputs(chunk, bundle.spec().input_size()), head);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (!chunk[i].class_label) throw SchemaError("evaluate: sample without ground-truth label");
      if (argmax_lowest(probs.row(static_cast<Eigen::Index>(i))) == *chunk[i].class_label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(domain.size());
}

struct Trainer::StepDraw {
  std::vector<Sample> labeled;
  std::vector<PseudoLabeledSample> pseudo;
  std::vector<Sample> unlabeled;
};

Trainer::Trainer(TrainConfig config, const DatasetBundle& data) : config_(std::move(config)), data_(&data) {
  if (config_.num_classes == 0) config_.num_classes = data.num_classes();
  config_.validate();
  if (config_.num_classes != data.num_classes()) {
    throw ConfigError("num_classes: config says " + std::to_string(config_.num_classes) + ", dataset has " +
                      std::to_string(data.num_classes()));
  }
  if (data.labeled_samples().empty()) throw ConfigError("dataset: labeled domain '" + data.labeled_domain + "' is empty");
  if (data.target_domain) target_ = data.target_samples();

  const int num_domains = data.num_training_domains();
  model_ = ModelBundle<double>(backbone_for(data.layout, config_), config_.num_classes, num_domains, config_.seed);
  model_.zero_class_heads();
  optimizer_ = SgdMomentum<double>(config_.momentum, config_.weight_decay);
  bank_ = ClassRepBank(num_domains - 1, config_.num_classes, config_.feature_dim);
  bank_written_.assign(static_cast<std::size_t>(num_domains - 1), -1);
  state_ = TrainState(data.labeled_samples(), data.unlabeled_samples());
  rng_.seed(config_.seed ^ kBatchStreamSalt);
}

Trainer::StepDraw Trainer::draw_step(std::vector<std::size_t>& pool_a, std::size_t& cursor_a,
                                     std::vector<std::size_t>& pool_u, std::size_t& cursor_u, std::size_t take_a,
                                     std::size_t take_u) {
  auto next = [this](std::vector<std::size_t>& pool, std::size_t& cursor) {
    if (cursor == pool.size()) {
      std::shuffle(pool.begin(), pool.end(), rng_);
      cursor = 0;
    }
    return pool[cursor++];
  };
  StepDraw draw;
  const std::size_t nl = state_.labeled_set().size();
  for (std::size_t i = 0; i < take_a; ++i) {
    const std::size_t k = next(pool_a, cursor_a);
    if (k < nl) {
      draw.labeled.push_back(state_.labeled_set()[k]);
    } else {
      draw.pseudo.push_back(state_.pseudo_set()[k - nl]);
    }
  }
  for (std::size_t i = 0; i < take_u; ++i) draw.unlabeled.push_back(state_.unlabeled_set()[next(pool_u, cursor_u)]);
  return draw;
}

void Trainer::optimize_epoch(int epoch, double lr, double ramp, LossReport& mean) {
  const AblationFlags& flags = config_.flags;
  const bool with_unlabeled = uses_unlabeled(flags);
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  const std::size_t pool_a_size = state_.labeled_set().size() + state_.pseudo_set().size();
  const std::size_t trained_on = with_unlabeled ? state_.total_size() : state_.labeled_set().size();
  const std::size_t steps = (trained_on + batch - 1) / batch;

  std::vector<std::size_t> pool_a(pool_a_size), pool_u(with_unlabeled ? state_.unlabeled_set().size() : 0);
  std::iota(pool_a.begin(), pool_a.end(), 0);
  std::iota(pool_u.begin(), pool_u.end(), 0);
  std::size_t cursor_a = pool_a.size(), cursor_u = pool_u.size();

  const std::size_t take_u = std::min(batch / 2, pool_u.size());
  const std::size_t take_a = std::min(batch - take_u, pool_a.size());
  const int num_domains = model_.num_domains();
  const int classes = config_.num_classes;
  const Eigen::Index width = model_.spec().input_size();
  const ObjectiveSpec objective = training_objective(ramp, flags);

  for (std::size_t step = 0; step < steps; ++step) {
    StepDraw draw = draw_step(pool_a, cursor_a, pool_u, cursor_u, take_a, take_u);

    TrainingBatch tb;
    tb.labeled_x = stack_inputs(draw.labeled, width);
    tb.labeled_y = Matrix::Zero(tb.labeled_x.rows(), classes);
    for (std::size_t i = 0; i < draw.labeled.size(); ++i) tb.labeled_y(static_cast<Eigen::Index>(i), *draw.labeled[i].class_label) = 1.0;
    tb.pseudo_x = Matrix(static_cast<Eigen::Index>(draw.pseudo.size()), width);
    tb.pseudo_y = Matrix(static_cast<Eigen::Index>(draw.pseudo.size()), classes);
    for (std::size_t i = 0; i < draw.pseudo.size(); ++i) {
      tb.pseudo_x.row(static_cast<Eigen::Index>(i)) = draw.pseudo[i].sample.input.transpose();
      tb.pseudo_y.row(static_cast<Eigen::Index>(i)) = draw.pseudo[i].pseudo_label.transpose();
      tb.pseudo_domains.push_back(draw.pseudo[i].sample.domain_id);
    }
    tb.unlabeled_x = stack_inputs(draw.unlabeled, width);
    for (const Sample& s : draw.unlabeled) tb.unlabeled_domains.push_back(s.domain_id);

    if (flags.use_mixup) {
      std::vector<PseudoLabeledSample> partners = draw.pseudo;
      if (flags.mixup_all) {
        // Every unlabeled sample joins, labeled by its current argmax q.
        for (const Sample& s : draw.unlabeled) {
          const auto it = last_argmax_.find(to_underlying(s.id));
          if (it == last_argmax_.end()) continue;
          partners.push_back({s, one_hot(it->second, classes), 0.0, epoch});
        }
      }
      tb.mixed = build_mixed_batch(draw.labeled, partners, config_.alpha, classes, num_domains, rng_);
    } else if (flags.use_dual_classifier) {
      tb.mixed = pure_batch(draw.labeled, draw.pseudo, classes, num_domains);
    }

    BundleGradients<double> grads = model_.zero_gradients();
    const LossReport report = evaluate_batch(model_, tb, objective, ramp, &grads);
    if (!report.all_finite()) {
      nlohmann::json dump = {{"epoch", epoch},
                             {"step", step},
                             {"losses", to_json(report)},
                             {"labeled_in_batch", draw.labeled.size()},
                             {"pseudo_in_batch", draw.pseudo.size()},
                             {"unlabeled_in_batch", draw.unlabeled.size()},
                             {"mixed_in_batch", tb.mixed.size()},
                             {"labeled_set", state_.labeled_set().size()},
                             {"unlabeled_set", state_.unlabeled_set().size()},
                             {"pseudo_set", state_.pseudo_set().size()},
                             {"learning_rate", lr},
                             {"config", to_text(config_)}};
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step),
                          dump.dump(2));
    }
    optimizer_.step(model_, grads, lr);
    accumulate(mean, report);
    if (observer_ != nullptr) observer_->on_step(epoch, static_cast<int>(step), report);
  }
  if (steps > 0) {
    const double n = static_cast<double>(steps);
    mean.cls /= n;
    mean.adv /= n;
    mean.cls_mix /= n;
    mean.adv_mix /= n;
    mean.ent /= n;
    mean.total_model /= n;
    mean.total_discriminator /= n;
  }
}

int Trainer::label_unlabeled(int epoch, int& ready_domains) {
  const std::vector<Sample>& pending = state_.unlabeled_set();
  ready_domains = 0;
  if (pending.empty()) return 0;
  const AblationFlags& flags = config_.flags;
  const int domains = bank_.num_unlabeled_domains();

  std::vector<bool> ready(static_cast<std::size_t>(domains) + 1, false);
  for (int d = 1; d <= domains; ++d) {
    ready[static_cast<std::size_t>(d)] = flags.use_dapl && bank_.ready(d);
    if (ready[static_cast<std::size_t>(d)]) {
      ++ready_domains;
      if (observer_ != nullptr) observer_->on_bank_read(epoch, d, bank_written_[static_cast<std::size_t>(d - 1)]);
    }
  }

  // Inference in evaluation mode: features and q from the predictive head.
  std::vector<ScoredSample> scored;
  scored.reserve(pending.size());
  const Eigen::Index width = model_.spec().input_size();
  for (std::size_t begin = 0; begin < pending.size(); begin += kInferenceChunk) {
    const auto chunk = std::span(pending).subspan(begin, std::min<std::size_t>(kInferenceChunk, pending.size() - begin));
    const Matrix features = model_.features(stack_inputs(chunk, width));
    const Matrix q = nn::softmax_rows(model_.predictive_classifier().forward(features));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      ScoredSample s;
      s.id = chunk[i].id;
      s.domain_id = chunk[i].domain_id;
      s.feature = features.row(r).transpose();
      s.q = q.row(r).transpose();
      s.s = s.q;
      if (ready[static_cast<std::size_t>(s.domain_id)]) {
        try {
          s.psi = similarity_vector(s.feature, bank_, s.domain_id);
          s.s = blend_scores(s.q, s.psi, config_.gamma);
        } catch (const DegenerateVectorError&) {
          s.psi.resize(0);  // dead feature; keep the naive score
        }
      }
      scored.push_back(std::move(s));
    }
  }

  if (flags.use_dapl) {
    bank_ = update_bank(std::move(bank_), scored, config_.rep_policy);
    std::fill(bank_written_.begin(), bank_written_.end(), epoch);
    if (observer_ != nullptr) observer_->on_bank_write(epoch);
  }

  std::vector<PseudoLabeledSample> confident;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (const auto label = assign_pseudo_label(scored[i].s, config_.delta)) {
      Sample sample = pending[i];
      confident.push_back({std::move(sample), label->one_hot, label->score, epoch});
    }
  }
  if (flags.mixup_all) {
    last_argmax_.clear();
    for (const ScoredSample& s : scored) last_argmax_[to_underlying(s.id)] = argmax_lowest(s.q);
  }
  const int migrated = static_cast<int>(confident.size());
  state_ = migrate_confident(std::move(state_), confident);
  for (const PseudoLabeledSample& p : confident) last_argmax_.erase(to_underlying(p.sample.id));
  return migrated;
}

EpochSummary Trainer::run_epoch() {
  if (finished()) throw ConfigError("epochs: training already finished");
  const int epoch = next_epoch_;
  EpochSummary summary;
  summary.epoch = epoch;
  summary.learning_rate = config_.learning_rate_at(epoch);
  const double ramp = ramp_weight(epoch, config_.effective_ramp_epochs());
  summary.losses.ramp = ramp;

  optimize_epoch(epoch, summary.learning_rate, ramp, summary.losses);
  if (config_.flags.use_pseudo_labels) summary.num_confident_new = label_unlabeled(epoch, summary.bank_ready_domains);

  state_.set_epoch(epoch + 1);
  summary.pseudo_set_size = static_cast<int>(state_.pseudo_set().size());
  summary.unlabeled_set_size = static_cast<int>(state_.unlabeled_set().size());
  if (!data_->ground_truth_for_unlabeled.empty()) {
    summary.pseudo_label_accuracy = data_->ground_truth_for_unlabeled.pseudo_label_accuracy(state_.pseudo_set());
  }
  if (!target_.empty()) summary.target_accuracy = evaluate(model_, target_, inference_head(config_.flags));

  ++next_epoch_;
  summaries_.push_back(summary);
  if (observer_ != nullptr) observer_->on_epoch_end(summary, state_, bank_);
  return summary;
}

const std::vector<EpochSummary>& Trainer::run() {
  while (!finished()) run_epoch();
  return summaries_;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Archive archive;
  std::ostringstream rng_text;
  rng_text << rng_;

  nlohmann::json state = {{"labeled", nlohmann::json::array()},
                          {"unlabeled", nlohmann::json::array()},
                          {"pseudo", nlohmann::json::array()},
                          {"epoch", state_.epoch()}};
  for (const Sample& s : state_.labeled_set()) state["labeled"].push_back(to_underlying(s.id));
  for (const Sample& s : state_.unlabeled_set()) state["unlabeled"].push_back(to_underlying(s.id));
  for (const PseudoLabeledSample& p : state_.pseudo_set()) {
    state["pseudo"].push_back({{"id", to_underlying(p.sample.id)},
                               {"class", p.class_index()},
                               {"score", p.score_at_assignment},
                               {"epoch", p.epoch_assigned}});
  }
  nlohmann::json summaries = nlohmann::json::array();
  for (const EpochSummary& s : summaries_) summaries.push_back(to_json(s));
  nlohmann::json argmax = nlohmann::json::array();
  for (const auto& [id, cls] : last_argmax_) argmax.push_back({id, cls});

  archive.metadata = {{"format", "ssdg-checkpoint"},
                      {"config_hash", config_hash(config_)},
                      {"config", to_text(config_)},
                      {"backbone", model_.spec().describe()},
                      {"num_classes", model_.num_classes()},
                      {"num_domains", model_.num_domains()},
                      {"next_epoch", next_epoch_},
                      {"rng", rng_text.str()},
                      {"bank_written", bank_written_},
                      {"state", state},
                      {"last_argmax", argmax},
                      {"summaries", summaries},
                      {"optimizer", {{"momentum", optimizer_.momentum()},
                                     {"weight_decay", optimizer_.weight_decay()},
                                     {"velocity_arrays", optimizer_.velocity().size()}}}};

  auto& model = const_cast<ModelBundle<double>&>(model_);
  for (const auto& p : model.named_parameters()) archive.add(p.component, "model/" + p.component + "/" + p.name, *p.value);
  for (std::size_t i = 0; i < optimizer_.velocity().size(); ++i) {
    archive.add("optimizer", "optimizer/velocity/" + std::to_string(i), optimizer_.velocity()[i]);
  }
  for (int d = 1; d <= bank_.num_unlabeled_domains(); ++d) {
    const std::string prefix = "bank/d" + std::to_string(d) + "/";
    Matrix present(bank_.num_classes(), 1), best(bank_.num_classes(), 1);
    for (int c = 0; c < bank_.num_classes(); ++c) {
      present(c, 0) = bank_.has_row(d, c) ? 1.0 : 0.0;
      best(c, 0) = bank_.best_confidence(d, c);
      const auto& cands = bank_.candidates(d, c);
      Matrix stacked(static_cast<Eigen::Index>(cands.size()), bank_.feature_dim());
      for (std::size_t k = 0; k < cands.size(); ++k) stacked.row(static_cast<Eigen::Index>(k)) = cands[k].transpose();
      archive.add("bank", prefix + "c" + std::to_string(c) + "/candidates", std::move(stacked));
    }
    archive.add("bank", prefix + "reps", bank_.reps(d));
    archive.add("bank", prefix + "present", std::move(present));
    archive.add("bank", prefix + "best", std::move(best));
  }
  write_archive(path, archive);
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, TrainConfig config, const DatasetBundle& data) {
  Trainer trainer(std::move(config), data);
  const Archive archive = read_archive(checkpoint);
  const nlohmann::json& meta = archive.metadata;
  try {
    if (meta.at("format") != "ssdg-checkpoint") throw CheckpointError(checkpoint.string() + ": not a trainer checkpoint");
    const std::string expected = config_hash(trainer.config_);
    const std::string stored = meta.at("config_hash").get<std::string>();
    if (stored != expected) {
      throw CheckpointError("refusing to resume: checkpoint config hash " + stored + " differs from " + expected +
                            "; the configuration changed since the checkpoint was written");
    }
    if (meta.at("num_domains").get<int>() != trainer.model_.num_domains() ||
        meta.at("num_classes").get<int>() != trainer.model_.num_classes()) {
      throw CheckpointError("refusing to resume: dataset domains/classes differ from the checkpoint");
    }

    for (auto& p : trainer.model_.named_parameters()) {
      const Matrix& stored_value = archive.array("model/" + p.component + "/" + p.name);
      if (stored_value.rows() != p.value->rows() || stored_value.cols() != p.value->cols()) {
        throw CheckpointError("parameter '" + p.name + "' of " + p.component + " has a different shape");
      }
      *p.value = stored_value;
    }
    const auto velocity_arrays = meta.at("optimizer").at("velocity_arrays").get<std::size_t>();
    trainer.optimizer_.velocity().clear();
    for (std::size_t i = 0; i < velocity_arrays; ++i) {
      trainer.optimizer_.velocity().push_back(archive.array("optimizer/velocity/" + std::to_string(i)));
    }

    ClassRepBank bank(trainer.bank_.num_unlabeled_domains(), trainer.bank_.num_classes(), trainer.bank_.feature_dim());
    for (int d = 1; d <= bank.num_unlabeled_domains(); ++d) {
      const std::string prefix = "bank/d" + std::to_string(d) + "/";
      const Matrix& reps = archive.array(prefix + "reps");
      const Matrix& present = archive.array(prefix + "present");
      const Matrix& best = archive.array(prefix + "best");
      for (int c = 0; c < bank.num_classes(); ++c) {
        const Matrix& cands = archive.array(prefix + "c" + std::to_string(c) + "/candidates");
        for (Eigen::Index k = 0; k < cands.rows(); ++k) bank.add_candidate(d, c, cands.row(k).transpose());
        if (present(c, 0) != 0.0) bank.set_row(d, c, reps.row(c).transpose());
        bank.raise_best_confidence(d, c, best(c, 0));
      }
    }
    trainer.bank_ = std::move(bank);
    trainer.bank_written_ = meta.at("bank_written").get<std::vector<int>>();

    std::map<std::uint64_t, const Sample*> by_id;
    for (const auto& [name, samples] : data.domains) {
      for (const Sample& s : samples) by_id[to_underlying(s.id)] = &s;
    }
    auto lookup = [&](std::uint64_t id) -> const Sample& {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw CheckpointError("checkpoint references sample " + std::to_string(id) + " not in the dataset");
      return *it->second;
    };
    const nlohmann::json& st = meta.at("state");
    std::vector<Sample> labeled, unlabeled;
    std::vector<PseudoLabeledSample> pseudo;
    for (const auto& id : st.at("labeled")) labeled.push_back(lookup(id.get<std::uint64_t>()));
    for (const auto& id : st.at("unlabeled")) unlabeled.push_back(lookup(id.get<std::uint64_t>()));
    for (const auto& p : st.at("pseudo")) {
      pseudo.push_back({lookup(p.at("id").get<std::uint64_t>()), one_hot(p.at("class").get<int>(), trainer.config_.num_classes),
                        p.at("score").get<double>(), p.at("epoch").get<int>()});
    }
    trainer.state_ = TrainState::restore(std::move(labeled), std::move(unlabeled), std::move(pseudo), st.at("epoch").get<int>());

    std::istringstream rng_text(meta.at("rng").get<std::string>());
    rng_text >> trainer.rng_;
    if (!rng_text) throw CheckpointError("checkpoint rng state is malformed");
    trainer.next_epoch_ = meta.at("next_epoch").get<int>();
    trainer.last_argmax_.clear();
    for (const auto& entry : meta.at("last_argmax")) trainer.last_argmax_[entry.at(0).get<std::uint64_t>()] = entry.at(1).get<int>();
    trainer.summaries_.clear();
    for (const auto& s : meta.at("summaries")) trainer.summaries_.push_back(epoch_summary_from_json(s));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(checkpoint.string() + ": malformed checkpoint metadata (" + e.what() + ")");
  } catch (const IdentityError& e) {
    throw CheckpointError(checkpoint.string() + ": inconsistent set membership (" + e.what() + ")");
  }
  return trainer;
}

TrainResult train(const TrainConfig& config, const DatasetBundle& data, TrainObserver* observer) {
  Trainer trainer(config, data);
  trainer.set_observer(observer);
  trainer.run();
  return {trainer.model(), trainer.summaries()};
}

}  // namespace ssdg
