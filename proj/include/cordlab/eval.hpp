// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics on synthetic RAG data and report emission.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cordlab/data_model.hpp"
#include "cordlab/model.hpp"

namespace cordlab {

/// Maps an instance to a predicted answer (without terminator).
using Predictor = std::function<TokenSeq(const Instance&)>;

/// Greedy decoding capped at |answer| + 1 tokens.
Predictor greedy_predictor(const ModelParams& params);

std::vector<TokenSeq> predict_all(const Predictor& predict, const Dataset& data);

/// Fraction of predictions token-identical to the answer. Throws on empty data.
double exact_match(const Dataset& data, const std::vector<TokenSeq>& predictions);
double exact_match(const ModelParams& params, const Dataset& data);

/// Set-level F1 between predicted and gold tokens (1 when both are empty).
double token_f1(const TokenSeq& predicted, const TokenSeq& gold);
double needle_f1(const Dataset& data, const std::vector<TokenSeq>& predictions);
double needle_f1(const ModelParams& params, const Dataset& data);

/// Fraction of unanswerable instances decoded exactly as the refusal answer.
/// Every instance must be multi_needle_idk.
double idk_accuracy(const Dataset& data, const std::vector<TokenSeq>& predictions);
double idk_accuracy(const ModelParams& params, const Dataset& data);

struct BiasProfile {
  std::vector<std::optional<double>> accuracy;  // index r-1 for gold rank r; nullopt = no instances
  std::vector<std::size_t> counts;
  double spread = 0.0;  // max - min over present buckets
};

/// Accuracy bucketed by gold rank. A single-gold instance counts as correct
/// when the whole prediction matches; with several golds each gold rank is
/// scored by the answer slot its key occupies.
BiasProfile position_bias_profile(const Dataset& data, const std::vector<TokenSeq>& predictions);
BiasProfile position_bias_profile(const ModelParams& params, const Dataset& data);

/// Mean over instances and random orderings sigma of
/// sum_t JSD(f_t(c) || f_t(sigma(c))) / T, teacher-forced on answer + terminator.
double consistency_jsd(const ModelParams& params, const Dataset& data, int num_perms, std::uint64_t seed);

struct DatasetMetrics {
  std::string name;
  std::size_t n_instances = 0;
  std::vector<std::string> requested;  // metric names that must be present
  std::optional<double> exact_match;
  std::optional<double> idk_accuracy;
  std::optional<double> needle_f1;
  std::optional<BiasProfile> position_bias;
  std::optional<double> consistency_jsd;
};

struct EvalOptions {
  std::vector<std::string> metrics;  // subset of kMetricNames
  int num_perms = 2;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string> kMetricNames = {"exact_match", "idk_accuracy", "needle_f1", "position_bias",
                                                      "consistency_jsd"};

/// Decodes each instance once and fills every requested metric.
DatasetMetrics evaluate(const ModelParams& params, const Dataset& data, const std::string& name,
                        const EvalOptions& opts);

struct RunReport {
  std::vector<DatasetMetrics> datasets;
  std::optional<double> pairing_ratio;
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;
};

class IncompleteReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes report.csv (dataset,metric,value) and report.txt (aligned table) to
/// `dir`; wall-clock time goes to timing.txt so the report files stay
/// byte-identical across reruns.
void emit_report(const RunReport& r, const std::filesystem::path& dir);

std::string report_csv(const RunReport& r);
std::string report_text(const RunReport& r);

}  // namespace cordlab
