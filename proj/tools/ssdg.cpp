#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssdg/experiments.hpp"
#include "ssdg/metrics.hpp"
#include "ssdg/report.hpp"

namespace fs = std::filesystem;
using namespace ssdg;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct DatasetFlags {
  std::string data;
  std::string kind;
  std::string labeled;
  std::string target;
  std::string unlabeled;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data, "Dataset directory or table file");
    cmd->add_option("--dataset-kind", kind, "synthetic, directory or table");
    cmd->add_option("--labeled", labeled, "Labeled source domain");
    cmd->add_option("--target", target, "Held-out target domain");
    cmd->add_option("--unlabeled", unlabeled, "Comma-separated unlabeled source domains");
  }

  void apply(RunSpec& spec) const {
    if (!data.empty()) {
      apply_run_key(spec, "dataset.path", data);
      if (kind.empty() && spec.dataset.kind == DatasetSource::Kind::synthetic) {
        spec.dataset.kind = fs::is_directory(data) ? DatasetSource::Kind::directory : DatasetSource::Kind::table;
      }
    }
    if (!kind.empty()) apply_run_key(spec, "dataset.kind", kind);
    if (!labeled.empty()) apply_run_key(spec, "dataset.labeled", labeled);
    if (!target.empty()) apply_run_key(spec, "dataset.target", target);
    if (!unlabeled.empty()) apply_run_key(spec, "dataset.unlabeled", unlabeled);
  }
};

RunSpec load_spec(const std::string& config_path, const std::vector<std::string>& sets) {
  KeyValues values = config_path.empty() ? KeyValues{} : KeyValues::load(config_path);
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set: expected key=value, got '" + kv + "'");
    values.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return run_spec_from(values);
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n' << e.dump() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised domain generalization trainer"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  DatasetFlags dataset;

  // train
  auto* train = app.add_subcommand("train", "Train one configuration");
  std::vector<std::string> ablations;
  std::string arm;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string out_dir;
  std::string resume;
  train->add_option("--config", config_path, "key = value configuration file");
  train->add_option("--set", sets, "Override a configuration key (key=value)");
  train->add_option("--arm", arm, "Named arm (ours, supone, no-dapl, ...)");
  train->add_option("--ablation", ablations, "Additional ablation, repeatable");
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--epochs", epochs, "Number of epochs");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--resume", resume, "Continue from a checkpoint");
  dataset.attach(train);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run a gamma/delta or alpha grid over seeds");
  sweep->add_option("--config", config_path, "key = value configuration file");
  sweep->add_option("--set", sets, "Override a configuration key (key=value)");
  sweep->add_option("--out", out_dir, "Output directory");
  dataset.attach(sweep);

  // report
  auto* report = app.add_subcommand("report", "Tables and plots from metrics logs");
  std::vector<std::string> logs;
  std::string report_dir = "report";
  report->add_option("logs", logs, "Metrics logs")->required();
  report->add_option("--out", report_dir, "Output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset table");
  std::string synth_out;
  synth->add_option("--config", config_path, "key = value configuration file");
  synth->add_option("--set", sets, "Override a synth.* key (key=value)");
  synth->add_option("--out", synth_out, "Output table")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint on one domain");
  std::string checkpoint;
  std::string manifest_path;
  std::string domain;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint archive")->required();
  eval->add_option("--manifest", manifest_path, "Run manifest (default: next to the checkpoint)");
  eval->add_option("--domain", domain, "Domain to evaluate (default: target)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (train->parsed()) {
    return guarded([&] {
      RunSpec spec = load_spec(config_path, sets);
      dataset.apply(spec);
      if (!arm.empty()) apply_run_key(spec, "arm", arm);
      for (const std::string& a : ablations) {
        TrainConfig probe;
        apply_ablation(probe, a);
        spec.ablations.push_back(a);
      }
      if (seed) spec.config.seed = *seed;
      if (epochs) spec.config.epochs = *epochs;
      const TrainConfig config = spec.effective_config();
      config.validate();
      const DatasetBundle data = load_dataset(spec.dataset);
      for (const std::string& w : data.warnings) std::cerr << "warning: " << w << '\n';
      const fs::path root = resolve_output_dir(out_dir.empty() ? spec.output_dir : fs::path(out_dir));
      const fs::path run_dir = root / (spec.label() + "-seed" + std::to_string(config.seed));
      std::optional<fs::path> from;
      if (!resume.empty()) from = fs::path(resume);
      const RunOutcome run = execute_run(spec, config, data, run_dir, spec.label(), from);
      std::cout << "manifest " << run.manifest_path.string() << '\n';
      if (!run.summaries.empty() && run.summaries.back().target_accuracy) {
        std::printf("target_accuracy %.4f\n", *run.summaries.back().target_accuracy);
      }
      return 0;
    });
  }

  if (sweep->parsed()) {
    return guarded([&] {
      RunSpec spec = load_spec(config_path, sets);
      dataset.apply(spec);
      spec.effective_config().validate();
      const fs::path root = resolve_output_dir(out_dir.empty() ? spec.output_dir : fs::path(out_dir));
      SweepResult result;
      if (!sweep_grid(spec).empty()) result = run_sweep(spec, load_dataset(spec.dataset), root);
      const std::string table = sweep_table(result);
      fs::create_directories(root);
      std::ofstream(root / "sweep.tsv", std::ios::trunc) << table;
      std::cout << table;
      for (const SweepCell& cell : result.cells) {
        for (const auto& [s, why] : cell.failures) {
          std::cerr << "failed: " << cell.label << " seed " << s << ": " << why << '\n';
        }
      }
      return result.failed_runs() == 0 ? 0 : kExitFailure;
    });
  }

  if (report->parsed()) {
    return guarded([&] {
      std::vector<MetricsLog> parsed;
      for (const std::string& path : logs) parsed.push_back(read_metrics_log(path));
      for (const fs::path& p : write_report(parsed, resolve_output_dir(report_dir))) std::cout << p.string() << '\n';
      return 0;
    });
  }

  if (synth->parsed()) {
    return guarded([&] {
      const RunSpec spec = load_spec(config_path, sets);
      write_table(generate_synthetic_raw(spec.dataset.synth), synth_out);
      std::cout << synth_out << '\n';
      return 0;
    });
  }

  if (eval->parsed()) {
    return guarded([&] {
      const fs::path ckpt(checkpoint);
      const fs::path mpath = manifest_path.empty() ? ckpt.parent_path() / "manifest.json" : fs::path(manifest_path);
      const RunManifest manifest = RunManifest::load(mpath);
      const DatasetBundle data = load_dataset(DatasetSource::from_json(manifest.dataset));
      const Trainer trainer = Trainer::resume(ckpt, manifest.config, data);
      const std::string name = domain.empty() ? data.target_domain.value_or("") : domain;
      if (name.empty()) throw ConfigError("--domain: the dataset has no target domain, name one");
      const double acc = evaluate(trainer.model(), data.samples(name), inference_head(manifest.config.flags));
      std::printf("%s %.4f\n", name.c_str(), acc);
      return 0;
    });
  }
  return kExitUsage;
}
