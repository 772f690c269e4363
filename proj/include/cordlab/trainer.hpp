// SPDX-License-Identifier: Apache-2.0
//
// Finetuning loop over the micro model. Every objective compared in the
// experiments is a TrainMode:
//
//   none                no update
//   nll_given           NLL on the retriever order c only
//   in2                 NLL on a full shuffle c' only
//   nll_aug             NLL on c and c' (augmentation, no distillation)
//   consistency_random  nll_aug plus JSD between c and c'
//   cord                NLL on c and the selected teacher plus JSD between them
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cordlab/data_model.hpp"
#include "cordlab/losses.hpp"
#include "cordlab/model.hpp"
#include "cordlab/teacher_selection.hpp"

namespace cordlab {

enum class TrainMode { none, nll_given, nll_aug, consistency_random, cord, in2 };
std::string_view to_string(TrainMode m);
TrainMode train_mode_from_string(std::string_view s);

enum class TeacherScoring { live, frozen_initial };

struct TrainConfig {
  TrainMode mode = TrainMode::cord;
  double lambda = 10.0;
  AlphaPolicy alpha_policy = AlphaPolicy::fixed(0.5);
  ConsistencyMode consistency_mode = ConsistencyMode::all_steps();
  int epochs = 5;
  int batch_size = 16;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  bool linear_decay = false;
  TeacherScoring teacher_scoring = TeacherScoring::live;
  TeacherOverride teacher_override = TeacherOverride::none;
  bool stop_gradient_teacher = false;  // ablation: JSD gradient only into the given-order branch
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamOptions {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p -= lr * wd * p
};

/// One bias-corrected Adam update with decoupled weight decay.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamOptions& opts);

/// One ordering fed to the model for an instance. With two branches the first
/// is the given order and the second its perturbed partner.
struct Branch {
  ContextSequence ordering;
  bool consistency = false;  // true when JSD ties this branch to the other one
};

struct PairResult {
  std::vector<Branch> branches;  // one or two
  std::optional<TeacherChoice> choice;
  std::optional<ForwardResult> teacher_forward;  // reused by train() when scoring params are live
};

/// Per-instance seed for epoch `epoch`; c'_alpha uses it and c' uses it ^ 1.
std::uint64_t perturbation_seed(std::uint64_t train_seed, int epoch, std::size_t instance_index);

/// Branches for one instance under `tc.mode`. `scoring` scores teacher candidates.
PairResult make_pair(const Instance& inst, const TrainConfig& tc, const ModelParams& scoring, std::uint64_t seed);

struct StepRecord {
  int step = 0;
  int epoch = 0;
  LossBreakdown loss;
};

struct EpochSnapshot {
  int epoch = 0;
  std::map<std::string, double> metrics;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<SelectionRecord> selections;
  std::vector<EpochSnapshot> snapshots;
  std::size_t floor_clamps = 0;
};

struct TrainResult {
  ModelParams params;
  TrainLog log;
};

/// Called after every epoch with the current parameters; the returned metrics
/// are stored as that epoch's snapshot.
using EpochCallback = std::function<std::map<std::string, double>(int epoch, const ModelParams&)>;

/// Loss and parameter gradient for a single instance (exposed for gradient checks).
struct InstanceLoss {
  LossBreakdown loss;
  std::vector<double> grad;
  std::size_t floor_clamps = 0;
};
InstanceLoss instance_loss(const ModelParams& params, const Instance& inst, const PairResult& pair,
                           const TrainConfig& tc);
/// Adds the instance gradient into `grad`; returns the loss and the number of floor clamps.
std::pair<LossBreakdown, std::size_t> instance_loss_into(const ModelParams& params, const Instance& inst,
                                                         const PairResult& pair, const TrainConfig& tc,
                                                         std::span<double> grad);

TrainResult train(const TrainConfig& tc, const Dataset& train_data, const ModelParams& init,
                  const EpochCallback& on_epoch = {});

/// CSV columns: step,mode,nll_given,nll_teacher,consistency,combined
void write_train_log(const TrainLog& log, TrainMode mode, const std::filesystem::path& path);

}  // namespace cordlab
