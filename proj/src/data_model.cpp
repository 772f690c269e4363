// SPDX-License-Identifier: Apache-2.0
#include "cordlab/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cordlab {

namespace {

std::string join_violations(const std::vector<Violation>& vs) {
  std::string out;
  for (const auto& v : vs) {
    if (!out.empty()) out += "; ";
    out += v.rule;
    if (!v.detail.empty()) out += " (" + v.detail + ")";
  }
  return out;
}

void append_tokens(std::string& out, const TokenSeq& ts) {
  out += '[';
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ts[i].id);
  }
  out += ']';
}

void append_quoted(std::string& out, std::string_view s) {
  out += '"';
  for (char ch : s) {
    if (ch == '"' || ch == '\\') {
      out += '\\';
      out += ch;
    } else if (static_cast<unsigned char>(ch) < 0x20) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(ch));
      out += buf;
    } else {
      out += ch;
    }
  }
  out += '"';
}

TokenSeq read_tokens(const nlohmann::json& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw std::invalid_argument(std::string(key) + " must be an array");
  TokenSeq out;
  out.reserve(arr.size());
  for (const auto& e : arr) {
    if (!e.is_number_integer()) throw std::invalid_argument(std::string(key) + " must hold integers");
    out.push_back(Token{e.get<std::int32_t>()});
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::string instance_id, std::vector<Violation> violations)
    : std::runtime_error("instance " + instance_id + ": " + join_violations(violations)),
      instance_id_(std::move(instance_id)),
      violations_(std::move(violations)) {}

TokenSeq make_tokens(std::initializer_list<std::int32_t> ids) {
  TokenSeq out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(Token{id});
  return out;
}

ContextSequence::ContextSequence(std::vector<Context> contexts) : contexts_(std::move(contexts)) {
  if (contexts_.empty()) throw std::invalid_argument("ContextSequence requires at least one context");
}

ContextSequence ContextSequence::from_retriever(std::vector<Context> contexts) {
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (!std::isfinite(contexts[i].score)) throw std::invalid_argument("non-finite retriever score");
    if (i > 0 && !(contexts[i - 1].score > contexts[i].score)) {
      throw std::invalid_argument("retriever scores must be strictly descending");
    }
  }
  return ContextSequence(std::move(contexts));
}

std::vector<double> ContextSequence::scores() const {
  std::vector<double> out;
  out.reserve(contexts_.size());
  for (const auto& c : contexts_) out.push_back(c.score);
  return out;
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::rank_prior: return "rank_prior";
    case Scenario::multi_needle: return "multi_needle";
    case Scenario::multi_needle_idk: return "multi_needle_idk";
  }
  return "?";
}

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

Scenario scenario_from_string(std::string_view s) {
  if (s == "rank_prior") return Scenario::rank_prior;
  if (s == "multi_needle") return Scenario::multi_needle;
  if (s == "multi_needle_idk") return Scenario::multi_needle_idk;
  throw std::invalid_argument("unknown scenario '" + std::string(s) + "'");
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

std::vector<Violation> validate_instance(const Instance& inst, int vocab_size) {
  std::vector<Violation> out;
  auto check_tokens = [&](const TokenSeq& ts, const std::string& where) {
    for (auto t : ts) {
      if (t.id < 0 || t.id >= vocab_size) {
        out.push_back({"token range", where + " holds token " + std::to_string(t.id) +
                                          " outside [0, " + std::to_string(vocab_size) + ")"});
      }
    }
  };
  check_tokens(inst.question, "question");
  const int n = static_cast<int>(inst.contexts.size());
  for (int i = 0; i < n; ++i) {
    const auto& c = inst.contexts[static_cast<std::size_t>(i)];
    const std::string where = "context " + std::to_string(i + 1);
    if (c.tokens.empty()) out.push_back({"empty context", where});
    if (!std::isfinite(c.score)) out.push_back({"non-finite score", where});
    check_tokens(c.tokens, where);
  }
  if (inst.answer.empty()) out.push_back({"empty answer", ""});
  check_tokens(inst.answer, "answer");

  std::set<int> seen;
  for (int r : inst.gold_ranks) {
    if (r < 1 || r > n) {
      out.push_back({"gold rank range", "rank " + std::to_string(r) + " outside [1, " + std::to_string(n) + "]"});
    }
    if (!seen.insert(r).second) out.push_back({"duplicate gold rank", std::to_string(r)});
  }
  if (inst.scenario == Scenario::multi_needle_idk && !inst.gold_ranks.empty()) {
    out.push_back({"idk gold ranks", "unanswerable instance lists gold contexts"});
  }
  return out;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string encode_record(const Instance& inst) {
  std::string out;
  out.reserve(256);
  out += "{\"id\":";
  append_quoted(out, inst.id);
  out += ",\"question\":";
  append_tokens(out, inst.question);
  out += ",\"contexts\":[";
  for (std::size_t i = 0; i < inst.contexts.size(); ++i) {
    if (i) out += ',';
    out += "{\"tokens\":";
    append_tokens(out, inst.contexts[i].tokens);
    out += ",\"score\":";
    out += format_real(inst.contexts[i].score);
    out += '}';
  }
  out += "],\"answer\":";
  append_tokens(out, inst.answer);
  out += ",\"scenario\":";
  append_quoted(out, to_string(inst.scenario));
  out += ",\"gold_ranks\":[";
  for (std::size_t i = 0; i < inst.gold_ranks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(inst.gold_ranks[i]);
  }
  out += "]}";
  return out;
}

Instance decode_record(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, e.what());
  }
  try {
    if (!j.is_object()) throw std::invalid_argument("record must be an object");
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.question = read_tokens(j, "question");
    std::vector<Context> contexts;
    for (const auto& cj : j.at("contexts")) {
      Context c;
      c.tokens = read_tokens(cj, "tokens");
      const auto& s = cj.at("score");
      if (!s.is_number()) throw std::invalid_argument("score must be a number");
      c.score = s.get<double>();
      contexts.push_back(std::move(c));
    }
    if (contexts.empty()) throw std::invalid_argument("contexts must be non-empty");
    inst.contexts = ContextSequence(std::move(contexts));
    inst.answer = read_tokens(j, "answer");
    inst.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    for (const auto& r : j.at("gold_ranks")) inst.gold_ranks.push_back(r.get<int>());
    std::sort(inst.gold_ranks.begin(), inst.gold_ranks.end());
    return inst;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(line_no, e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<int> vocab_size, Split split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  Dataset d;
  d.split = split;
  std::string line;
  std::size_t line_no = 0;
  int max_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Instance inst = decode_record(line, line_no);
    auto bump = [&](const TokenSeq& ts) {
      for (auto t : ts) max_id = std::max(max_id, t.id);
    };
    bump(inst.question);
    bump(inst.answer);
    for (const auto& c : inst.contexts) bump(c.tokens);
    d.instances.push_back(std::move(inst));
  }
  d.vocab_size = vocab_size.value_or(max_id + 1);
  for (const auto& inst : d.instances) {
    auto violations = validate_instance(inst, d.vocab_size);
    if (!violations.empty()) throw ValidationError(inst.id, std::move(violations));
  }
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  for (const auto& inst : d.instances) {
    out << encode_record(inst) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace cordlab
