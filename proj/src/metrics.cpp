#include "ssdg/metrics.hpp"

#include <cmath>

#include "ssdg/config.hpp"
#include "ssdg/serialization.hpp"

namespace ssdg {

namespace {

// JSON has no infinities or NaN; they travel as strings.
nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double read_number(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  throw SchemaError("not a number: " + s);
}

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? number(*v) : nlohmann::json(nullptr);
}

std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return read_number(j.at(key));
}

}  // namespace

nlohmann::json to_json(const LossReport& r) {
  return {{"cls", number(r.cls)},
          {"adv", number(r.adv)},
          {"cls_mix", number(r.cls_mix)},
          {"adv_mix", number(r.adv_mix)},
          {"ent", number(r.ent)},
          {"ramp", number(r.ramp)},
          {"total_model", number(r.total_model)},
          {"total_discriminator", number(r.total_discriminator)}};
}

LossReport loss_report_from_json(const nlohmann::json& j) {
  LossReport r;
  r.cls = read_number(j.at("cls"));
  r.adv = read_number(j.at("adv"));
  r.cls_mix = read_number(j.at("cls_mix"));
  r.adv_mix = read_number(j.at("adv_mix"));
  r.ent = read_number(j.at("ent"));
  r.ramp = read_number(j.at("ramp"));
  r.total_model = read_number(j.at("total_model"));
  r.total_discriminator = read_number(j.at("total_discriminator"));
  return r;
}

nlohmann::json to_json(const EpochSummary& s) {
  return {{"epoch", s.epoch},
          {"losses", to_json(s.losses)},
          {"num_confident_new", s.num_confident_new},
          {"pseudo_set_size", s.pseudo_set_size},
          {"unlabeled_set_size", s.unlabeled_set_size},
          {"bank_ready_domains", s.bank_ready_domains},
          {"learning_rate", number(s.learning_rate)},
          {"pseudo_label_accuracy", optional_number(s.pseudo_label_accuracy)},
          {"target_accuracy", optional_number(s.target_accuracy)}};
}

EpochSummary epoch_summary_from_json(const nlohmann::json& j) {
  EpochSummary s;
  s.epoch = j.at("epoch").get<int>();
  s.losses = loss_report_from_json(j.at("losses"));
  s.num_confident_new = j.at("num_confident_new").get<int>();
  s.pseudo_set_size = j.at("pseudo_set_size").get<int>();
  s.unlabeled_set_size = j.at("unlabeled_set_size").get<int>();
  s.bank_ready_domains = j.at("bank_ready_domains").get<int>();
  s.learning_rate = read_number(j.at("learning_rate"));
  s.pseudo_label_accuracy = read_optional(j, "pseudo_label_accuracy");
  s.target_accuracy = read_optional(j, "target_accuracy");
  return s;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, const RunHeader& header, bool log_steps)
    : path_(path), log_steps_(log_steps) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::out | std::ios::trunc);
  if (!out_) throw Error("cannot open metrics log " + path.string());
  write({{"type", "run"},
         {"arm", header.arm},
         {"num_classes", header.num_classes},
         {"config", to_text(header.config)},
         {"config_hash", config_hash(header.config)},
         {"has_ground_truth", header.has_ground_truth},
         {"dataset", header.dataset},
         {"manifest", header.manifest}});
}

void MetricsWriter::write(nlohmann::json record) {
  record["schema"] = kMetricsSchema;
  out_ << record.dump() << '\n';
  if (!out_) throw Error("write failed on metrics log " + path_.string());
}

void MetricsWriter::on_step(int epoch, int step, const LossReport& report) {
  if (log_steps_) write({{"type", "step"}, {"epoch", epoch}, {"step", step}, {"losses", to_json(report)}});
}

void MetricsWriter::on_epoch_end(const EpochSummary& summary, const TrainState&, const ClassRepBank&) {
  write({{"type", "epoch"}, {"summary", to_json(summary)}});
  out_.flush();
}

MetricsLog read_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open metrics log " + path.string());
  MetricsLog log;
  log.path = path;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const nlohmann::json record = nlohmann::json::parse(line);
      if (record.value("schema", "") != kMetricsSchema) {
        throw SchemaError(where + ": unsupported schema '" + record.value("schema", "") + "'");
      }
      const std::string type = record.at("type").get<std::string>();
      if (type == "run") {
        log.header.arm = record.at("arm").get<std::string>();
        log.header.num_classes = record.at("num_classes").get<int>();
        log.header.config = train_config_from_text(record.at("config").get<std::string>());
        log.header.has_ground_truth = record.at("has_ground_truth").get<bool>();
        log.header.dataset = record.value("dataset", "");
        log.header.manifest = record.value("manifest", "");
        have_header = true;
      } else if (!have_header) {
        throw SchemaError(where + ": record before the run header");
      } else if (type == "step") {
        ++log.steps;
      } else if (type == "epoch") {
        log.epochs.push_back(epoch_summary_from_json(record.at("summary")));
      } else {
        throw SchemaError(where + ": unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    } catch (const ConfigError& e) {
      throw SchemaError(where + ": bad config (" + std::string(e.what()) + ")");
    }
  }
  if (!have_header) throw SchemaError(path.string() + ": no run header");
  return log;
}

}  // namespace ssdg
