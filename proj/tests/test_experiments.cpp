#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "fixtures.hpp"
#include "ssdg/experiments.hpp"
#include "ssdg/metrics.hpp"
#include "ssdg/report.hpp"

using namespace ssdg;
namespace fs = std::filesystem;

namespace {

const char* kSmall =
    "epochs = 3\nbatch_size = 16\nfeature_dim = 8\nhidden_dim = 8\n"
    "synth.num_domains = 3\nsynth.num_classes = 3\nsynth.samples_per_class_per_domain = 15\nsynth.dim = 6\n";

RunSpec small_spec() { return run_spec_from(KeyValues::parse(kSmall)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SSDG_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("run keys") {
  const RunSpec spec = small_spec();
  CHECK(spec.config.epochs == 3);
  CHECK(spec.dataset.synth.num_classes == 3);
  RunSpec s;
  CHECK_THROWS_AS(apply_run_key(s, "gamm", "0.1"), ConfigError);
  CHECK_THROWS_AS(apply_run_key(s, "synth.num_domains", "x"), ConfigError);
  CHECK_THROWS_AS(apply_run_key(s, "dataset.kind", "video"), ConfigError);
  apply_run_key(s, "sweep.gamma_delta", "0.05:0.2,0.1:0.24");
  REQUIRE(s.sweep_gamma_delta.size() == 2);
  CHECK(s.sweep_gamma_delta[1].second == 0.24);
  CHECK(sweep_grid(s)[0].label == "gamma=0.05,delta=0.2");
}

TEST_CASE("ablations and labels") {
  TrainConfig c;
  apply_ablation(c, "no-dapl");
  CHECK_FALSE(c.flags.use_dapl);
  CHECK(c.flags.use_pseudo_labels);
  TrainConfig s;
  apply_ablation(s, "supone");
  CHECK_FALSE(s.flags.use_pseudo_labels);
  CHECK_FALSE(s.flags.use_adversarial);
  CHECK_THROWS_AS(apply_ablation(c, "no-such"), ConfigError);
  RunSpec spec;
  CHECK(spec.label() == "ours");
  spec.ablations = {"no-dapl"};
  CHECK(spec.label() == "no-dapl");
  CHECK_FALSE(spec.effective_config().flags.use_dapl);
  spec.arm = "supone";
  spec.ablations = {"one"};
  CHECK(spec.label() == "supone+one");
}

TEST_CASE("missing dataset path names the key") {
  DatasetSource src;
  src.kind = DatasetSource::Kind::table;
  try {
    load_dataset(src);
    FAIL("loaded a table without a path");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("dataset.path", 0) == 0);
  }
}

TEST_CASE("manifest round trip") {
  const fs::path dir = fixture::scratch_dir("manifest");
  RunManifest m;
  m.config.gamma = 0.2;
  m.dataset = small_spec().dataset.describe();
  m.code_version = "abc";
  m.arm = "no-dc";
  m.ablations = {"no-dc"};
  m.metrics = "a/metrics.jsonl";
  m.checkpoint = "a/checkpoint.ssdg";
  m.report = "a/report.txt";
  m.save(dir / "m.json");
  const RunManifest back = RunManifest::load(dir / "m.json");
  CHECK(back.config == m.config);
  CHECK(back.dataset == m.dataset);
  CHECK(back.ablations == m.ablations);
  CHECK(back.metrics == m.metrics);
  CHECK(DatasetSource::from_json(back.dataset).synth == small_spec().dataset.synth);
  std::ofstream(dir / "bad.json") << "{\"schema\": \"other\"}";
  CHECK_THROWS_AS(RunManifest::load(dir / "bad.json"), SchemaError);
  fs::remove_all(dir);
}

TEST_CASE("runs write manifest, metrics and checkpoint; reports are stable") {
  const fs::path dir = fixture::scratch_dir("runs");
  RunSpec spec = small_spec();
  const DatasetBundle data = load_dataset(spec.dataset);
  std::vector<MetricsLog> logs;
  for (const std::string arm : {"ours", "no-dapl"}) {
    RunSpec s = spec;
    if (arm != "ours") s.ablations = {arm};
    const RunOutcome run = execute_run(s, s.effective_config(), data, dir / arm, s.label());
    CHECK(run.summaries.size() == 3);
    CHECK(fs::exists(run.manifest.checkpoint));
    CHECK(fs::exists(run.manifest.report));
    const MetricsLog log = read_metrics_log(run.manifest.metrics);
    CHECK(log.header.arm == arm);
    CHECK(log.header.num_classes == 3);
    CHECK(log.epochs == run.summaries);
    CHECK(log.steps > 0);
    logs.push_back(log);
  }
  CHECK(logs[1].header.config.flags.use_dapl == false);

  const auto first = write_report(logs, dir / "r1");
  const auto second = write_report(logs, dir / "r2");
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(slurp(first[i]) == slurp(second[i]));
  CHECK(comparison_table(logs).find("no-dapl") != std::string::npos);

  std::vector<MetricsLog> mixed = logs;
  mixed[1].header.num_classes = 4;
  CHECK_THROWS_AS(check_compatible(mixed), SchemaError);
  CHECK_THROWS_AS(check_compatible({}), SchemaError);

  // Resuming replays the stored epochs into the new log.
  RunSpec longer = spec;
  longer.config.epochs = 3;
  const RunOutcome resumed = execute_run(longer, longer.effective_config(), data, dir / "resumed", "ours",
                                         dir / "ours" / "checkpoint.ssdg");
  CHECK(read_metrics_log(resumed.manifest.metrics).epochs == logs[0].epochs);
  fs::remove_all(dir);
}

TEST_CASE("metrics logs are validated") {
  const fs::path dir = fixture::scratch_dir("metrics");
  std::ofstream(dir / "empty.jsonl") << "";
  std::ofstream(dir / "wrong.jsonl") << "{\"schema\": \"x\", \"type\": \"run\"}\n";
  std::ofstream(dir / "garbage.jsonl") << "{not json\n";
  for (const char* name : {"empty.jsonl", "wrong.jsonl", "garbage.jsonl", "absent.jsonl"}) {
    INFO(name);
    CHECK_THROWS_AS(read_metrics_log(dir / name), SchemaError);
  }
  fs::remove_all(dir);
}

TEST_CASE("sweeps isolate failing runs") {
  const fs::path dir = fixture::scratch_dir("sweep");
  RunSpec spec = small_spec();
  spec.config.epochs = 1;
  spec.sweep_gamma_delta = {{0.1, 0.24}, {1.5, 0.3}};
  spec.sweep_seeds = {0, 1};
  const SweepResult r = run_sweep(spec, load_dataset(spec.dataset), dir);
  REQUIRE(r.cells.size() == 2);
  CHECK(r.cells[0].seeds_ok.size() == 2);
  CHECK(r.cells[1].failures.size() == 2);
  CHECK(r.failed_runs() == 2);
  CHECK(sweep_table(r).find("gamma=0.1,delta=0.24") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("command line") {
  const fs::path dir = fixture::scratch_dir("cli");
  const fs::path cfg = dir / "small.cfg";
  std::ofstream(cfg) << kSmall;
  const std::string base = "--config '" + cfg.string() + "' ";

  CHECK(cli("train " + base + "--dataset-kind table", dir / "missing.log") == 2);
  CHECK(slurp(dir / "missing.log").find("dataset.path") != std::string::npos);
  CHECK(cli("train " + base + "--set gamma=2", dir / "gamma.log") == 2);
  CHECK(cli("train --bogus", dir / "bogus.log") == 2);

  REQUIRE(cli("train " + base + "--ablation no-dapl --seed 1 --out '" + (dir / "runs").string() + "'",
              dir / "train.log") == 0);
  const fs::path run = dir / "runs" / "no-dapl-seed1";
  const RunManifest m = RunManifest::load(run / "manifest.json");
  CHECK(m.ablations == std::vector<std::string>{"no-dapl"});
  CHECK(m.arm == "no-dapl");
  CHECK_FALSE(m.config.flags.use_dapl);
  CHECK(m.config.seed == 1);
  CHECK_FALSE(m.code_version.empty());

  CHECK(cli("eval --checkpoint '" + (run / "checkpoint.ssdg").string() + "'", dir / "eval.log") == 0);
  CHECK(slurp(dir / "eval.log").rfind("d2 ", 0) == 0);

  CHECK(cli("sweep " + base + "--out '" + (dir / "sweep").string() + "'", dir / "sweep.log") == 0);
  CHECK(fs::exists(dir / "sweep" / "sweep.tsv"));

  CHECK(cli("report '" + (run / "metrics.jsonl").string() + "' --out '" + (dir / "report").string() + "'",
            dir / "report.log") == 0);
  CHECK(fs::exists(dir / "report" / "comparison.tsv"));

  CHECK(cli("synth " + base + "--out '" + (dir / "t.csv").string() + "'", dir / "synth.log") == 0);
  CHECK(read_table(dir / "t.csv").domain_names.size() == 3);

  CHECK(setenv("SSDG_OUTPUT_DIR", (dir / "env").string().c_str(), 1) == 0);
  CHECK(cli("train " + base + "--epochs 1", dir / "env.log") == 0);
  unsetenv("SSDG_OUTPUT_DIR");
  CHECK(fs::exists(dir / "env" / "ours-seed0" / "manifest.json"));
  fs::remove_all(dir);
}
