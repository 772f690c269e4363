// SPDX-License-Identifier: Apache-2.0
//
// Core RAG domain types and the line-delimited dataset format.
#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cordlab/errors.hpp"

namespace cordlab {

struct Token {
  std::int32_t id = 0;
  friend constexpr auto operator<=>(Token, Token) = default;
};

using TokenSeq = std::vector<Token>;

TokenSeq make_tokens(std::initializer_list<std::int32_t> ids);

/// One retrieved passage with its retriever score (higher = more relevant).
struct Context {
  TokenSeq tokens;
  double score = 0.0;
  friend bool operator==(const Context&, const Context&) = default;
};

/// Ordered retrieved contexts c = [c_1; ...; c_n]. Perturbed orderings carry
/// the original per-context scores and need not be sorted.
class ContextSequence {
 public:
  /// Requires n >= 1.
  explicit ContextSequence(std::vector<Context> contexts);

  /// Construction straight from a retriever: scores must be finite and
  /// strictly descending.
  static ContextSequence from_retriever(std::vector<Context> contexts);

  std::size_t size() const noexcept { return contexts_.size(); }
  const Context& operator[](std::size_t i) const { return contexts_[i]; }
  const std::vector<Context>& contexts() const noexcept { return contexts_; }
  auto begin() const noexcept { return contexts_.begin(); }
  auto end() const noexcept { return contexts_.end(); }
  std::vector<double> scores() const;

  friend bool operator==(const ContextSequence&, const ContextSequence&) = default;

 private:
  std::vector<Context> contexts_;
};

enum class Scenario { rank_prior, multi_needle, multi_needle_idk };
enum class Split { train, test };

std::string_view to_string(Scenario s);
std::string_view to_string(Split s);
Scenario scenario_from_string(std::string_view s);
Split split_from_string(std::string_view s);

struct Instance {
  std::string id;
  TokenSeq question;
  ContextSequence contexts{std::vector<Context>{Context{{Token{0}}, 0.0}}};
  TokenSeq answer;
  Scenario scenario = Scenario::rank_prior;
  std::vector<int> gold_ranks;  // 1-based, ascending, distinct

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Dataset {
  std::vector<Instance> instances;
  int vocab_size = 0;
  Split split = Split::train;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Every violated invariant, in a fixed check order. Empty means ok.
std::vector<Violation> validate_instance(const Instance& inst, int vocab_size);

/// Reads one record per line. When vocab_size is absent it is taken as
/// max token id + 1 over the file.
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<int> vocab_size = std::nullopt,
                     Split split = Split::train);

void save_dataset(const Dataset& d, const std::filesystem::path& path);

/// Single-record encoding used by save_dataset (no trailing newline).
std::string encode_record(const Instance& inst);
Instance decode_record(std::string_view line, std::size_t line_no);

/// Shortest form that still carries 17 significant digits.
std::string format_real(double v);

}  // namespace cordlab
