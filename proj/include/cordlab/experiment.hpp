// SPDX-License-Identifier: Apache-2.0
//
// One JSON file describes a whole experiment: data layout, optional
// bias-induction pretraining, model, finetuning objective and evaluation.
// Every seed is derived from the root seed except the pretraining seed, which
// is explicit so that several finetuning seeds can share one base model.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cordlab/data_model.hpp"
#include "cordlab/eval.hpp"
#include "cordlab/model.hpp"
#include "cordlab/taskgen.hpp"
#include "cordlab/teacher_selection.hpp"
#include "cordlab/trainer.hpp"

namespace cordlab {

struct DataSpec {
  Scenario scenario = Scenario::rank_prior;
  GenConfig gen;  // layout; n_instances and seed are set per split
  int n_train = 2000;
  int n_test = 500;
  int n_idk_train = 0;
  int n_idk_test = 0;
};

struct PretrainSet {
  Scenario scenario = Scenario::rank_prior;
  GenConfig gen;
};

struct PretrainSpec {
  std::uint64_t seed = 0;
  std::vector<PretrainSet> sets;
  TrainConfig train;
};

struct ModelSpec {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_seq_len = 256;
  InitOptions init;
  std::string init_checkpoint;  // empty = initialise (and pretrain if configured)
};

struct ExperimentSpec {
  std::uint64_t seed = 0;
  DataSpec data;
  ModelSpec model;
  std::optional<PretrainSpec> pretrain;
  TrainConfig train;
  EvalOptions eval;

  ModelConfig model_config() const;
};

/// Parses and validates; unknown keys and bad values throw ConfigError naming
/// the field (dotted path).
ExperimentSpec parse_experiment(const std::string& json_text);
ExperimentSpec load_experiment(const std::filesystem::path& path);

/// Every effective parameter, including defaults, as canonical JSON.
std::string effective_config_json(const ExperimentSpec& spec);

/// FNV-1a 64 of the canonical effective configuration, as 16 hex digits.
std::string config_hash(const ExperimentSpec& spec);

struct DerivedSeeds {
  std::uint64_t train_data, test_data, idk_train_data, idk_test_data;
  std::uint64_t init, finetune, eval;
  std::uint64_t pretrain_data, pretrain_init, pretrain_train;
};
DerivedSeeds derived_seeds(const ExperimentSpec& spec);

/// Manifest written next to generated data: hash, seeds and effective config.
std::string manifest_json(const ExperimentSpec& spec);

struct GeneratedData {
  Dataset train;
  Dataset test;
  std::optional<Dataset> idk_train;
  std::optional<Dataset> idk_test;
  std::optional<Dataset> pretrain;
};

GeneratedData generate(const ExperimentSpec& spec);

/// Fresh initialisation followed by pretraining when the spec has a pretrain
/// section; loads init_checkpoint instead when one is given.
ModelParams base_model(const ExperimentSpec& spec, const std::optional<Dataset>& pretrain_data,
                       TrainLog* pretrain_log = nullptr);

/// Finetunes `base` on train (+ idk_train) with the spec's objective.
TrainResult finetune(const ExperimentSpec& spec, const GeneratedData& data, const ModelParams& base);

/// Metrics on the test split (spec.eval.metrics) and, when present, idk
/// accuracy on the IDK test split.
RunReport evaluate_run(const ExperimentSpec& spec, const ModelParams& params, const Dataset& test,
                       const std::optional<Dataset>& idk_test, std::span<const SelectionRecord> selections);

struct EpochSelectionSummary {
  int epoch = 0;
  std::size_t selections = 0;
  double ratio = 0.0;       // fraction of interp choices
  double mean_alpha = 0.0;
};

struct SelectionSummary {
  std::vector<EpochSelectionSummary> epochs;
  double ratio = 0.0;  // over all records
  double mean_alpha = 0.0;
};

/// Per-epoch pairing ratio and mean alpha. Throws on an empty log.
SelectionSummary summarize_selections(std::span<const SelectionRecord> records);

/// CSV columns: epoch,ratio,mean_alpha
std::string selection_summary_csv(const SelectionSummary& s);

}  // namespace cordlab
