#include "ssdg/experiments.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "ssdg/metrics.hpp"

#ifndef SSDG_CODE_VERSION
#define SSDG_CODE_VERSION "unknown"
#endif

namespace ssdg {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const std::string& item : split_list(value)) out.push_back(parse_double(key, item));
  return out;
}

DatasetSource::Kind parse_source_kind(const std::string& text) {
  if (text == "synthetic") return DatasetSource::Kind::synthetic;
  if (text == "directory") return DatasetSource::Kind::directory;
  if (text == "table") return DatasetSource::Kind::table;
  throw ConfigError("dataset.kind: expected synthetic, directory or table, got '" + text + "'");
}

nlohmann::json synth_json(const SyntheticSpec& s) {
  return {{"num_domains", s.num_domains},
          {"num_classes", s.num_classes},
          {"samples_per_class_per_domain", s.samples_per_class_per_domain},
          {"shift_kind", to_string(s.shift_kind)},
          {"shift_magnitude", s.shift_magnitude},
          {"class_separation", s.class_separation},
          {"noise_std", s.noise_std},
          {"seed", s.seed},
          {"mode", s.mode == SyntheticSpec::Mode::vector ? "vector" : "image"},
          {"dim", s.dim},
          {"image_side", s.image_side},
          {"image_channels", s.image_channels}};
}

SyntheticSpec synth_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.num_domains = j.at("num_domains").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  s.samples_per_class_per_domain = j.at("samples_per_class_per_domain").get<int>();
  s.shift_kind = parse_shift_kind(j.at("shift_kind").get<std::string>());
  s.shift_magnitude = j.at("shift_magnitude").get<double>();
  s.class_separation = j.at("class_separation").get<double>();
  s.noise_std = j.at("noise_std").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.mode = j.at("mode").get<std::string>() == "image" ? SyntheticSpec::Mode::image : SyntheticSpec::Mode::vector;
  s.dim = j.at("dim").get<int>();
  s.image_side = j.at("image_side").get<int>();
  s.image_channels = j.at("image_channels").get<int>();
  return s;
}

std::string run_report(const RunManifest& manifest, const std::vector<EpochSummary>& summaries) {
  std::ostringstream out;
  out << "arm\t" << manifest.arm << '\n';
  out << "code_version\t" << manifest.code_version << '\n';
  out << "config_hash\t" << config_hash(manifest.config) << '\n';
  out << "epochs\t" << summaries.size() << '\n';
  if (!summaries.empty()) {
    const EpochSummary& last = summaries.back();
    out << "final_target_accuracy\t" << (last.target_accuracy ? fmt(*last.target_accuracy) : "unavailable") << '\n';
    out << "final_pseudo_label_accuracy\t"
        << (last.pseudo_label_accuracy ? fmt(*last.pseudo_label_accuracy) : "unavailable") << '\n';
    out << "final_pseudo_set_size\t" << last.pseudo_set_size << '\n';
  }
  out << "\nepoch\tlr\tramp\tcls\tadv\tcls_mix\tadv_mix\tent\tnew\tpseudo\tunlabeled\tpl_acc\ttarget_acc\n";
  for (const EpochSummary& s : summaries) {
    out << s.epoch << '\t' << fmt(s.learning_rate, "%g") << '\t' << fmt(s.losses.ramp) << '\t' << fmt(s.losses.cls) << '\t'
        << fmt(s.losses.adv) << '\t' << fmt(s.losses.cls_mix) << '\t' << fmt(s.losses.adv_mix) << '\t'
        << fmt(s.losses.ent) << '\t' << s.num_confident_new << '\t' << s.pseudo_set_size << '\t'
        << s.unlabeled_set_size << '\t' << (s.pseudo_label_accuracy ? fmt(*s.pseudo_label_accuracy) : "n/a") << '\t'
        << (s.target_accuracy ? fmt(*s.target_accuracy) : "n/a") << '\n';
  }
  return out.str();
}

}  // namespace

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"ours",     "supone",    "no-dapl",    "no-dc",   "no-mixup",
                                              "mixup-all", "no-entropy", "no-advmix", "naive-pl", "one"};
  return names;
}

void apply_ablation(TrainConfig& config, const std::string& name) {
  AblationFlags& f = config.flags;
  if (name == "ours") {
  } else if (name == "supone") {
    f.use_dapl = f.use_dual_classifier = f.use_mixup = f.mixup_all = false;
    f.use_entropy = f.use_adv_mix = f.use_adversarial = f.use_pseudo_labels = false;
  } else if (name == "no-dapl") {
    f.use_dapl = false;
  } else if (name == "no-dc") {
    f.use_dual_classifier = false;
  } else if (name == "no-mixup") {
    f.use_mixup = false;
    f.mixup_all = false;
  } else if (name == "mixup-all") {
    f.use_mixup = true;
    f.mixup_all = true;
  } else if (name == "no-entropy") {
    f.use_entropy = false;
  } else if (name == "no-advmix") {
    f.use_adv_mix = false;
  } else if (name == "naive-pl") {
    f.use_dapl = false;
    f.use_dual_classifier = false;
  } else if (name == "one") {
    config.rep_policy = RepPolicy::one;
  } else {
    std::string known;
    for (const std::string& n : ablation_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("ablation: unknown name '" + name + "' (known: " + known + ")");
  }
}

std::string to_string(DatasetSource::Kind kind) {
  switch (kind) {
    case DatasetSource::Kind::synthetic: return "synthetic";
    case DatasetSource::Kind::directory: return "directory";
    case DatasetSource::Kind::table: return "table";
  }
  return "synthetic";
}

nlohmann::json DatasetSource::describe() const {
  nlohmann::json j = {{"kind", to_string(kind)}, {"unlabeled", unlabeled}};
  j["labeled"] = labeled ? nlohmann::json(*labeled) : nlohmann::json(nullptr);
  j["target"] = target ? nlohmann::json(*target) : nlohmann::json(nullptr);
  if (kind == Kind::synthetic) {
    j["synth"] = synth_json(synth);
  } else {
    j["path"] = path.string();
  }
  if (kind == Kind::directory) {
    j["image_side"] = image_side;
    j["channels"] = channels;
    j["mean"] = mean;
    j["std"] = stddev;
  }
  return j;
}

DatasetSource DatasetSource::from_json(const nlohmann::json& j) {
  DatasetSource s;
  s.kind = parse_source_kind(j.at("kind").get<std::string>());
  if (!j.at("labeled").is_null()) s.labeled = j.at("labeled").get<std::string>();
  if (!j.at("target").is_null()) s.target = j.at("target").get<std::string>();
  s.unlabeled = j.at("unlabeled").get<std::vector<std::string>>();
  if (s.kind == Kind::synthetic) {
    s.synth = synth_from_json(j.at("synth"));
  } else {
    s.path = j.at("path").get<std::string>();
  }
  if (s.kind == Kind::directory) {
    s.image_side = j.at("image_side").get<int>();
    s.channels = j.at("channels").get<int>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("std").get<std::vector<double>>();
  }
  return s;
}

DatasetBundle load_dataset(const DatasetSource& source) {
  if (source.kind == DatasetSource::Kind::synthetic) {
    const RawDataset raw = generate_synthetic_raw(source.synth);
    return make_bundle(raw, default_roles(raw, source.labeled, source.target, source.unlabeled));
  }
  if (source.path.empty()) throw ConfigError("dataset.path: required for a " + to_string(source.kind) + " dataset");
  if (!fs::exists(source.path)) throw ConfigError("dataset.path: '" + source.path.string() + "' does not exist");
  if (source.kind == DatasetSource::Kind::table) {
    const RawDataset raw = read_table(source.path);
    return make_bundle(raw, default_roles(raw, source.labeled, source.target, source.unlabeled));
  }
  if (!source.labeled) throw ConfigError("dataset.labeled: required for a directory dataset");
  if (source.unlabeled.empty()) throw ConfigError("dataset.unlabeled: required for a directory dataset");
  SplitSpec split;
  split.roles = {*source.labeled, source.unlabeled, source.target};
  split.image_side = source.image_side;
  split.channels = source.channels;
  split.mean = source.mean;
  split.stddev = source.stddev;
  return load_directory_dataset(source.path, split);
}

bool apply_synth_key(SyntheticSpec& s, const std::string& key, const std::string& value) {
  auto as_int = [&] { return static_cast<int>(parse_int(key, value)); };
  if (key == "synth.num_domains") s.num_domains = as_int();
  else if (key == "synth.num_classes") s.num_classes = as_int();
  else if (key == "synth.samples_per_class_per_domain") s.samples_per_class_per_domain = as_int();
  else if (key == "synth.shift_kind") s.shift_kind = parse_shift_kind(value);
  else if (key == "synth.shift_magnitude") s.shift_magnitude = parse_double(key, value);
  else if (key == "synth.class_separation") s.class_separation = parse_double(key, value);
  else if (key == "synth.noise_std") s.noise_std = parse_double(key, value);
  else if (key == "synth.seed") s.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "synth.mode") {
    if (value == "vector") s.mode = SyntheticSpec::Mode::vector;
    else if (value == "image") s.mode = SyntheticSpec::Mode::image;
    else throw ConfigError(key + ": expected vector or image, got '" + value + "'");
  } else if (key == "synth.dim") s.dim = as_int();
  else if (key == "synth.image_side") s.image_side = as_int();
  else if (key == "synth.image_channels") s.image_channels = as_int();
  else return false;
  return true;
}

TrainConfig RunSpec::effective_config() const {
  TrainConfig c = config;
  apply_ablation(c, arm);
  for (const std::string& a : ablations) apply_ablation(c, a);
  return c;
}

std::string RunSpec::label() const {
  std::string out = (arm == "ours" && !ablations.empty()) ? "" : arm;
  for (const std::string& a : ablations) out += (out.empty() ? "" : "+") + a;
  return out;
}

void apply_run_key(RunSpec& spec, const std::string& key, const std::string& value) {
  DatasetSource& ds = spec.dataset;
  if (apply_train_key(spec.config, key, value) || apply_synth_key(ds.synth, key, value)) return;
  if (key == "dataset.kind") ds.kind = parse_source_kind(value);
  else if (key == "dataset.path") ds.path = value;
  else if (key == "dataset.labeled") ds.labeled = value;
  else if (key == "dataset.target") ds.target = value;
  else if (key == "dataset.unlabeled") ds.unlabeled = split_list(value);
  else if (key == "dataset.image_side") ds.image_side = static_cast<int>(parse_int(key, value));
  else if (key == "dataset.channels") ds.channels = static_cast<int>(parse_int(key, value));
  else if (key == "dataset.mean") ds.mean = parse_doubles(key, value);
  else if (key == "dataset.std") ds.stddev = parse_doubles(key, value);
  else if (key == "arm") {
    TrainConfig probe;
    apply_ablation(probe, value);
    spec.arm = value;
  } else if (key == "ablation") {
    spec.ablations.clear();
    for (const std::string& a : split_list(value)) {
      TrainConfig probe;
      apply_ablation(probe, a);
      spec.ablations.push_back(a);
    }
  } else if (key == "output_dir") spec.output_dir = value;
  else if (key == "log_steps") spec.log_steps = parse_bool(key, value);
  else if (key == "checkpoint_every") spec.checkpoint_every = static_cast<int>(parse_int(key, value));
  else if (key == "sweep.gamma_delta") {
    spec.sweep_gamma_delta.clear();
    for (const std::string& pair : split_list(value)) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos) throw ConfigError(key + ": expected gamma:delta pairs, got '" + pair + "'");
      spec.sweep_gamma_delta.emplace_back(parse_double(key, pair.substr(0, colon)), parse_double(key, pair.substr(colon + 1)));
    }
  } else if (key == "sweep.alpha") spec.sweep_alpha = parse_doubles(key, value);
  else if (key == "sweep.seeds") {
    spec.sweep_seeds.clear();
    for (const std::string& s : split_list(value)) spec.sweep_seeds.push_back(static_cast<std::uint64_t>(parse_int(key, s)));
  } else {
    throw ConfigError(key + ": unknown key");
  }
}

RunSpec run_spec_from(const KeyValues& values) {
  RunSpec spec;
  for (const auto& [key, value] : values.entries()) apply_run_key(spec, key, value);
  return spec;
}

fs::path resolve_output_dir(const fs::path& requested) {
  if (const char* env = std::getenv("SSDG_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return requested;
}

std::string code_version() { return SSDG_CODE_VERSION; }

nlohmann::json RunManifest::to_json() const {
  return {{"schema", "ssdg.manifest/1"},
          {"config", to_text(config)},
          {"config_hash", config_hash(config)},
          {"dataset", dataset},
          {"code_version", code_version},
          {"arm", arm},
          {"ablations", ablations},
          {"outputs", {{"metrics", metrics.string()}, {"checkpoint", checkpoint.string()}, {"report", report.string()}}}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "ssdg.manifest/1") throw SchemaError("manifest: unsupported schema");
  RunManifest m;
  m.config = train_config_from_text(j.at("config").get<std::string>());
  m.dataset = j.at("dataset");
  m.code_version = j.at("code_version").get<std::string>();
  m.arm = j.at("arm").get<std::string>();
  m.ablations = j.at("ablations").get<std::vector<std::string>>();
  const auto& out = j.at("outputs");
  m.metrics = out.at("metrics").get<std::string>();
  m.checkpoint = out.at("checkpoint").get<std::string>();
  m.report = out.at("report").get<std::string>();
  return m;
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open manifest " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void RunManifest::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  out << to_json().dump(2) << '\n';
  if (!out) throw Error("cannot write manifest " + path.string());
}

RunOutcome execute_run(const RunSpec& spec, const TrainConfig& config, const DatasetBundle& data,
                       const fs::path& run_dir, const std::string& arm_label,
                       const std::optional<fs::path>& resume_from) {
  fs::create_directories(run_dir);
  RunOutcome outcome;
  RunManifest& m = outcome.manifest;
  m.config = config;
  if (m.config.num_classes == 0) m.config.num_classes = data.num_classes();
  m.dataset = spec.dataset.describe();
  m.code_version = code_version();
  m.arm = arm_label;
  m.ablations = spec.ablations;
  m.metrics = run_dir / "metrics.jsonl";
  m.checkpoint = run_dir / "checkpoint.ssdg";
  m.report = run_dir / "report.txt";
  outcome.manifest_path = run_dir / "manifest.json";
  m.save(outcome.manifest_path);

  RunHeader header;
  header.arm = arm_label;
  header.num_classes = data.num_classes();
  header.config = m.config;
  header.has_ground_truth = !data.ground_truth_for_unlabeled.empty();
  header.dataset = m.dataset.dump();
  header.manifest = outcome.manifest_path.string();
  MetricsWriter writer(m.metrics, header, spec.log_steps);

  Trainer trainer = resume_from ? Trainer::resume(*resume_from, m.config, data) : Trainer(m.config, data);
  for (const EpochSummary& s : trainer.summaries()) writer.on_epoch_end(s, trainer.state(), trainer.bank());
  trainer.set_observer(&writer);
  while (!trainer.finished()) {
    const EpochSummary s = trainer.run_epoch();
    if (spec.checkpoint_every > 0 && (s.epoch + 1) % spec.checkpoint_every == 0) trainer.save_checkpoint(m.checkpoint);
  }
  trainer.save_checkpoint(m.checkpoint);
  outcome.summaries = trainer.summaries();

  std::ofstream report(m.report, std::ios::trunc);
  report << run_report(m, outcome.summaries);
  if (!report) throw Error("cannot write report " + m.report.string());
  return outcome;
}

std::vector<SweepPoint> sweep_grid(const RunSpec& spec) {
  std::vector<SweepPoint> points;
  const TrainConfig base = spec.effective_config();
  for (const auto& [gamma, delta] : spec.sweep_gamma_delta) {
    SweepPoint p{"gamma=" + fmt(gamma, "%g") + ",delta=" + fmt(delta, "%g"), "gamma_delta", base};
    p.config.gamma = gamma;
    p.config.delta = delta;
    points.push_back(std::move(p));
  }
  for (const double alpha : spec.sweep_alpha) {
    SweepPoint p{"alpha=" + fmt(alpha, "%g"), "alpha", base};
    p.config.alpha = alpha;
    points.push_back(std::move(p));
  }
  return points;
}

std::size_t SweepResult::failed_runs() const {
  std::size_t n = 0;
  for (const SweepCell& c : cells) n += c.failures.size();
  return n;
}

SweepResult run_sweep(const RunSpec& spec, const DatasetBundle& data, const fs::path& out_dir) {
  SweepResult result;
  for (const SweepPoint& point : sweep_grid(spec)) {
    SweepCell cell{point.axis, point.label, {}, {}, {}, {}};
    for (const std::uint64_t seed : spec.sweep_seeds) {
      TrainConfig config = point.config;
      config.seed = seed;
      const fs::path dir = out_dir / point.axis / (point.label + ",seed=" + std::to_string(seed));
      try {
        const RunOutcome run = execute_run(spec, config, data, dir, spec.label());
        if (run.summaries.empty() || !run.summaries.back().target_accuracy) {
          throw Error("no target accuracy (no target domain or zero epochs)");
        }
        cell.seeds_ok.push_back(seed);
        cell.target_accuracy.push_back(*run.summaries.back().target_accuracy);
        cell.manifests.push_back(run.manifest_path);
      } catch (const std::exception& e) {
        cell.failures.emplace_back(seed, e.what());
      }
    }
    result.cells.push_back(std::move(cell));
  }
  return result;
}

std::string sweep_table(const SweepResult& result) {
  std::ostringstream out;
  out << "axis\tpoint\truns\tfailed\tmean_target_accuracy\tmanifests\n";
  for (const SweepCell& c : result.cells) {
    const double mean = c.target_accuracy.empty()
                            ? 0.0
                            : std::accumulate(c.target_accuracy.begin(), c.target_accuracy.end(), 0.0) /
                                  static_cast<double>(c.target_accuracy.size());
    std::string manifests;
    for (const fs::path& p : c.manifests) manifests += (manifests.empty() ? "" : ";") + p.string();
    out << c.axis << '\t' << c.label << '\t' << c.seeds_ok.size() << '\t' << c.failures.size() << '\t'
        << (c.target_accuracy.empty() ? "unavailable" : fmt(mean)) << '\t' << manifests << '\n';
  }
  return out.str();
}

}  // namespace ssdg
