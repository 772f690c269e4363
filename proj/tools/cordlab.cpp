// SPDX-License-Identifier: Apache-2.0
//
// cordlab gen|train|eval|diagnose --config <file> --out <dir> [--seed <u64>]
//
// Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cordlab/experiment.hpp"

namespace fs = std::filesystem;
using namespace cordlab;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

// Usage-level failure (bad flag values, missing inputs) reported with exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;  // eval
  std::string metrics;     // eval, comma separated
  std::string log;         // diagnose
};

ExperimentSpec load_spec(const Options& o) {
  ExperimentSpec spec = load_experiment(o.config);
  if (o.seed) spec.seed = *o.seed;
  return spec;
}

// Datasets written by gen must come from the same effective config.
void check_manifest(const ExperimentSpec& spec, const fs::path& out) {
  const fs::path m = out / "manifest.json";
  if (!fs::exists(m)) throw UsageError("no manifest in " + out.string() + "; run gen first");
  const auto j = nlohmann::json::parse(read_file(m));
  if (j.at("config_hash").get<std::string>() != config_hash(spec)) {
    throw UsageError("datasets in " + out.string() + " were generated from a different config (hash " +
                     j.at("config_hash").get<std::string>() + ", expected " + config_hash(spec) + ")");
  }
}

Dataset load_split(const ExperimentSpec& spec, const fs::path& p, Split split) {
  if (!fs::exists(p)) throw UsageError("missing dataset " + p.string());
  return load_dataset(p, spec.data.gen.vocab.vocab_size(), split);
}

GeneratedData load_generated(const ExperimentSpec& spec, const fs::path& out, bool need_pretrain) {
  GeneratedData d;
  d.train = load_split(spec, out / "train.jsonl", Split::train);
  d.test = load_split(spec, out / "test.jsonl", Split::test);
  if (spec.data.n_idk_train > 0) d.idk_train = load_split(spec, out / "idk_train.jsonl", Split::train);
  if (spec.data.n_idk_test > 0) d.idk_test = load_split(spec, out / "idk_test.jsonl", Split::test);
  if (need_pretrain && spec.pretrain) d.pretrain = load_split(spec, out / "pretrain.jsonl", Split::train);
  return d;
}

int cmd_gen(const Options& o) {
  const ExperimentSpec spec = load_spec(o);
  const fs::path out = o.out;
  fs::create_directories(out);
  const GeneratedData d = generate(spec);
  save_dataset(d.train, out / "train.jsonl");
  save_dataset(d.test, out / "test.jsonl");
  if (d.idk_train) save_dataset(*d.idk_train, out / "idk_train.jsonl");
  if (d.idk_test) save_dataset(*d.idk_test, out / "idk_test.jsonl");
  if (d.pretrain) save_dataset(*d.pretrain, out / "pretrain.jsonl");
  write_file(out / "manifest.json", manifest_json(spec));
  std::printf("wrote %zu train / %zu test instances to %s (config %s)\n", d.train.instances.size(),
              d.test.instances.size(), out.string().c_str(), config_hash(spec).c_str());
  return kOk;
}

int cmd_train(const Options& o) {
  const ExperimentSpec spec = load_spec(o);
  const fs::path out = o.out;
  check_manifest(spec, out);
  const bool pretrain = spec.pretrain && spec.model.init_checkpoint.empty();
  const GeneratedData d = load_generated(spec, out, pretrain);
  const auto t0 = std::chrono::steady_clock::now();

  TrainLog pre_log;
  const ModelParams base = base_model(spec, d.pretrain, &pre_log);
  if (pretrain) {
    save_checkpoint(base, out / "base.ckpt");
    write_train_log(pre_log, spec.pretrain->train.mode, out / "pretrain_log.csv");
  }
  const TrainResult r = finetune(spec, d, base);
  save_checkpoint(r.params, out / "model.ckpt");
  write_train_log(r.log, spec.train.mode, out / "train_log.csv");
  write_selection_log(r.log.selections, out / "selection.csv");

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("trained %s for %d epochs (%zu steps) in %.1f s\n", std::string(to_string(spec.train.mode)).c_str(),
              spec.train.epochs, r.log.steps.size(), secs);
  if (r.log.floor_clamps > 0) std::printf("note: %zu probabilities hit the log floor\n", r.log.floor_clamps);
  return kOk;
}

int cmd_eval(const Options& o) {
  ExperimentSpec spec = load_spec(o);
  if (!o.metrics.empty()) {
    spec.eval.metrics.clear();
    std::stringstream ss(o.metrics);
    for (std::string m; std::getline(ss, m, ',');) {
      if (std::find(kMetricNames.begin(), kMetricNames.end(), m) == kMetricNames.end() || m == "idk_accuracy") {
        throw UsageError("unknown metric '" + m + "' for --metrics");
      }
      spec.eval.metrics.push_back(m);
    }
  }
  const fs::path out = o.out;
  check_manifest(spec, out);
  const fs::path ckpt = o.checkpoint.empty() ? out / "model.ckpt" : fs::path(o.checkpoint);
  if (!fs::exists(ckpt)) throw UsageError("missing checkpoint " + ckpt.string());
  const auto t0 = std::chrono::steady_clock::now();
  const ModelParams params = load_checkpoint(ckpt);
  const GeneratedData d = load_generated(spec, out, false);
  std::vector<SelectionRecord> sel;
  if (o.checkpoint.empty() && fs::exists(out / "selection.csv")) sel = read_selection_log(out / "selection.csv");
  RunReport r = evaluate_run(spec, params, d.test, d.idk_test, sel);
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  emit_report(r, out);
  std::cout << report_text(r);
  return kOk;
}

int cmd_diagnose(const Options& o) {
  const fs::path out = o.out;
  const fs::path log = o.log.empty() ? out / "selection.csv" : fs::path(o.log);
  if (!fs::exists(log)) throw UsageError("missing selection log " + log.string());
  const auto records = read_selection_log(log);
  if (records.empty()) throw std::runtime_error("selection log " + log.string() + " is empty");
  const SelectionSummary s = summarize_selections(records);
  fs::create_directories(out);
  write_file(out / "diagnose.csv", selection_summary_csv(s));
  std::printf("epoch  ratio     mean_alpha\n");
  for (const auto& e : s.epochs) std::printf("%5d  %.6f  %.6f\n", e.epoch, e.ratio, e.mean_alpha);
  std::printf("overall pairing_ratio %.6f, effective mean alpha %.6f over %zu selections\n", s.ratio, s.mean_alpha,
              records.size());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cordlab: consistency regularization with rank distillation on synthetic RAG tasks"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "experiment config (JSON)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_option("--seed", o.seed, "root seed (overrides the config)");
  };
  auto* gen = app.add_subcommand("gen", "generate train/test datasets and a manifest");
  add_common(gen, true);
  auto* tr = app.add_subcommand("train", "pretrain (if configured) and finetune; writes checkpoint and logs");
  add_common(tr, true);
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint; writes report.csv and report.txt");
  add_common(ev, true);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate (default <out>/model.ckpt)");
  ev->add_option("--metrics", o.metrics, "comma-separated metrics for the test split");
  auto* dg = app.add_subcommand("diagnose", "pairing ratio and mean alpha per epoch from a selection log");
  add_common(dg, false);
  dg->add_option("--log", o.log, "selection log (default <out>/selection.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    return cmd_diagnose(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
}
