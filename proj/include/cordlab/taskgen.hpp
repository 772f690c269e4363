// SPDX-License-Identifier: Apache-2.0
//
// Synthetic key-value RAG benchmarks.
//
//   rank_prior     one gold record [key, value], optionally followed directly
//                  by stale records repeating the queried key with other
//                  values, so the retriever order decides which value is
//                  correct. Scores drop sharply right after that block.
//   multi_needle   k needle records among filler records; question lists the k
//                  keys, answer lists their values in key order. Scores are noise.
//   idk            multi_needle with one needle replaced by filler; the answer
//                  is the refusal token.
#pragma once

#include <cstdint>
#include <string>

#include "cordlab/data_model.hpp"
#include "cordlab/model.hpp"

namespace cordlab {

/// Token ids: keys, then values, then fillers, then separator and IDK.
struct VocabLayout {
  int n_keys = 32;
  int n_values = 32;
  int n_fillers = 16;

  Token key(int i) const { return Token{i}; }
  Token value(int i) const { return Token{n_keys + i}; }
  Token filler(int i) const { return Token{n_keys + n_values + i}; }
  Token separator() const { return Token{n_keys + n_values + n_fillers}; }
  Token idk() const { return Token{n_keys + n_values + n_fillers + 1}; }
  int vocab_size() const { return n_keys + n_values + n_fillers + 2; }
  bool is_value(Token t) const { return t.id >= n_keys && t.id < n_keys + n_values; }
};

/// Model config whose vocabulary, separator and IDK token follow `vocab`.
ModelConfig model_config_for(const VocabLayout& vocab, int d_model, int n_layers, int n_heads, int max_seq_len);

struct GoldRankDistribution {
  enum class Kind { head_biased, uniform, head_confined };
  Kind kind = Kind::uniform;
  double p = 0.5;    // head_biased: geometric parameter, truncated to [1, n]
  int max_rank = 2;  // head_confined: uniform over [1, max_rank]

  static GoldRankDistribution head_biased(double p) { return {Kind::head_biased, p, 2}; }
  static GoldRankDistribution uniform() { return {Kind::uniform, 0.5, 2}; }
  static GoldRankDistribution head_confined(int max_rank) { return {Kind::head_confined, 0.5, max_rank}; }
};

struct ScoreModel {
  enum class Kind { informative, uninformative };
  Kind kind = Kind::uninformative;
  double gap_size = 0.5;   // informative: extra drop right after the gold block
  double step = 0.05;      // informative: nominal drop between adjacent ranks
  double noise_sd = 0.01;

  static ScoreModel informative(double gap, double noise_sd) { return {Kind::informative, gap, 0.05, noise_sd}; }
  static ScoreModel uninformative(double noise_sd) { return {Kind::uninformative, 0.5, 0.05, noise_sd}; }
};

struct GenConfig {
  int n_contexts = 8;
  int n_instances = 2000;
  VocabLayout vocab;
  GoldRankDistribution gold = GoldRankDistribution::uniform();
  ScoreModel scores = ScoreModel::uninformative(0.1);
  int needles = 1;
  int conflicts = 0;         // rank_prior: stale records repeating the queried key below the gold
  int conflict_max_rank = 0; // stale records never sit below this rank; 0 = n_contexts
  int query_key_begin = 0;   // question keys are drawn from [begin, end)
  int query_key_end = -1;    // -1 = all keys
  Split split = Split::train;
  std::string id_prefix = "i";
  std::uint64_t seed = 0;

  int query_end() const { return query_key_end < 0 ? vocab.n_keys : query_key_end; }
  /// Throws ConfigError naming the offending field.
  void validate(Scenario scenario) const;
};

Dataset gen_rank_prior_dataset(const GenConfig& cfg);
Dataset gen_multi_needle_dataset(const GenConfig& cfg);
Dataset gen_idk_split(const GenConfig& cfg);

/// Concatenates instances; vocab sizes must agree.
Dataset concat(const Dataset& a, const Dataset& b);

/// Truncated geometric pmf P(r) over r = 1..n.
std::vector<double> truncated_geometric(double p, int n);

}  // namespace cordlab
