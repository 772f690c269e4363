// SPDX-License-Identifier: Apache-2.0
#include "cordlab/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cordlab/losses.hpp"
#include "cordlab/perturbation.hpp"
#include "cordlab/rng.hpp"

namespace cordlab {

namespace {

void require_aligned(const Dataset& data, const std::vector<TokenSeq>& predictions, const char* what) {
  if (data.instances.empty()) throw std::invalid_argument(std::string(what) + ": empty dataset");
  if (predictions.size() != data.instances.size()) {
    throw std::invalid_argument(std::string(what) + ": one prediction per instance required");
  }
}

bool wants(const EvalOptions& o, std::string_view m) {
  return std::find(o.metrics.begin(), o.metrics.end(), m) != o.metrics.end();
}

bool present(const DatasetMetrics& m, std::string_view name) {
  if (name == "exact_match") return m.exact_match.has_value();
  if (name == "idk_accuracy") return m.idk_accuracy.has_value();
  if (name == "needle_f1") return m.needle_f1.has_value();
  if (name == "position_bias") return m.position_bias.has_value();
  if (name == "consistency_jsd") return m.consistency_jsd.has_value();
  return false;
}

struct Row {
  std::string dataset, metric, value;
};

std::vector<Row> report_rows(const RunReport& r) {
  for (const auto& d : r.datasets) {
    if (d.requested.empty()) throw IncompleteReportError("dataset " + d.name + " has no metrics");
    for (const auto& m : d.requested) {
      if (!present(d, m)) throw IncompleteReportError("dataset " + d.name + " is missing metric " + m);
    }
  }
  if (r.datasets.empty()) throw IncompleteReportError("report has no datasets");

  std::vector<Row> rows;
  for (const auto& d : r.datasets) {
    rows.push_back({d.name, "n_instances", std::to_string(d.n_instances)});
    if (d.exact_match) rows.push_back({d.name, "exact_match", format_real(*d.exact_match)});
    if (d.idk_accuracy) rows.push_back({d.name, "idk_accuracy", format_real(*d.idk_accuracy)});
    if (d.needle_f1) rows.push_back({d.name, "needle_f1", format_real(*d.needle_f1)});
    if (d.position_bias) {
      const auto& p = *d.position_bias;
      for (std::size_t i = 0; i < p.accuracy.size(); ++i) {
        rows.push_back({d.name, "position_bias_rank_" + std::to_string(i + 1),
                        p.accuracy[i] ? format_real(*p.accuracy[i]) : std::string("NA")});
      }
      rows.push_back({d.name, "position_bias_spread", format_real(p.spread)});
    }
    if (d.consistency_jsd) rows.push_back({d.name, "consistency_jsd", format_real(*d.consistency_jsd)});
  }
  if (r.pairing_ratio) rows.push_back({"run", "pairing_ratio", format_real(*r.pairing_ratio)});
  rows.push_back({"run", "seed", std::to_string(r.seed)});
  return rows;
}

}  // namespace

Predictor greedy_predictor(const ModelParams& params) {
  return [&params](const Instance& inst) {
    return greedy_decode(params, inst.question, inst.contexts, static_cast<int>(inst.answer.size()) + 1);
  };
}

std::vector<TokenSeq> predict_all(const Predictor& predict, const Dataset& data) {
  std::vector<TokenSeq> out;
  out.reserve(data.instances.size());
  for (const auto& inst : data.instances) out.push_back(predict(inst));
  return out;
}

double exact_match(const Dataset& data, const std::vector<TokenSeq>& predictions) {
  require_aligned(data, predictions, "exact_match");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == data.instances[i].answer ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double exact_match(const ModelParams& params, const Dataset& data) {
  return exact_match(data, predict_all(greedy_predictor(params), data));
}

double token_f1(const TokenSeq& predicted, const TokenSeq& gold) {
  const std::set<Token> p(predicted.begin(), predicted.end());
  const std::set<Token> g(gold.begin(), gold.end());
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::size_t common = 0;
  for (auto t : p) common += g.count(t);
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double needle_f1(const Dataset& data, const std::vector<TokenSeq>& predictions) {
  require_aligned(data, predictions, "needle_f1");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += token_f1(predictions[i], data.instances[i].answer);
  return s / static_cast<double>(predictions.size());
}

double needle_f1(const ModelParams& params, const Dataset& data) {
  return needle_f1(data, predict_all(greedy_predictor(params), data));
}

double idk_accuracy(const Dataset& data, const std::vector<TokenSeq>& predictions) {
  require_aligned(data, predictions, "idk_accuracy");
  for (const auto& inst : data.instances) {
    if (inst.scenario != Scenario::multi_needle_idk) {
      throw std::invalid_argument("idk_accuracy: instance " + inst.id + " is not an unanswerable instance");
    }
  }
  return exact_match(data, predictions);
}

double idk_accuracy(const ModelParams& params, const Dataset& data) {
  for (const auto& inst : data.instances) {
    if (inst.scenario != Scenario::multi_needle_idk) {
      throw std::invalid_argument("idk_accuracy: instance " + inst.id + " is not an unanswerable instance");
    }
  }
  return idk_accuracy(data, predict_all(greedy_predictor(params), data));
}

BiasProfile position_bias_profile(const Dataset& data, const std::vector<TokenSeq>& predictions) {
  require_aligned(data, predictions, "position_bias_profile");
  std::size_t n = 0;
  for (const auto& inst : data.instances) n = std::max(n, inst.contexts.size());
  std::vector<std::size_t> hits(n, 0), counts(n, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Instance& inst = data.instances[i];
    const TokenSeq& pred = predictions[i];
    if (inst.gold_ranks.size() == 1) {
      const auto r = static_cast<std::size_t>(inst.gold_ranks.front() - 1);
      ++counts[r];
      hits[r] += pred == inst.answer ? 1 : 0;
      continue;
    }
    for (int rank : inst.gold_ranks) {
      const auto r = static_cast<std::size_t>(rank - 1);
      const Token key = inst.contexts[r].tokens.front();
      const auto slot = static_cast<std::size_t>(std::find(inst.question.begin(), inst.question.end(), key) -
                                                 inst.question.begin());
      if (slot >= inst.answer.size()) continue;
      ++counts[r];
      hits[r] += (slot < pred.size() && pred[slot] == inst.answer[slot]) ? 1 : 0;
    }
  }
  BiasProfile p;
  p.counts = counts;
  p.accuracy.resize(n);
  double lo = 1.0, hi = 0.0;
  bool any = false;
  for (std::size_t r = 0; r < n; ++r) {
    if (counts[r] == 0) continue;
    const double a = static_cast<double>(hits[r]) / static_cast<double>(counts[r]);
    p.accuracy[r] = a;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    any = true;
  }
  p.spread = any ? hi - lo : 0.0;
  return p;
}

BiasProfile position_bias_profile(const ModelParams& params, const Dataset& data) {
  return position_bias_profile(data, predict_all(greedy_predictor(params), data));
}

double consistency_jsd(const ModelParams& params, const Dataset& data, int num_perms, std::uint64_t seed) {
  if (num_perms < 1) throw std::invalid_argument("consistency_jsd: num_perms must be >= 1");
  if (data.instances.empty()) throw std::invalid_argument("consistency_jsd: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const Instance& inst = data.instances[i];
    const TokenSeq target = with_terminator(inst.answer, params.config);
    const auto base = forward(params, inst.question, inst.contexts, target);
    double inst_sum = 0.0;
    for (int k = 0; k < num_perms; ++k) {
      const auto perm = full_shuffle(inst.contexts, derive_seed(seed, i, static_cast<std::uint64_t>(k)));
      const auto other = forward(params, inst.question, perm, target);
      double s = 0.0;
      for (std::size_t t = 0; t < target.size(); ++t) s += jsd_value(base.dists[t], other.dists[t]);
      inst_sum += s / static_cast<double>(target.size());
    }
    total += inst_sum / num_perms;
  }
  return total / static_cast<double>(data.instances.size());
}

DatasetMetrics evaluate(const ModelParams& params, const Dataset& data, const std::string& name,
                        const EvalOptions& opts) {
  DatasetMetrics m;
  m.name = name;
  m.n_instances = data.instances.size();
  m.requested = opts.metrics;
  for (const auto& metric : opts.metrics) {
    if (std::find(kMetricNames.begin(), kMetricNames.end(), metric) == kMetricNames.end()) {
      throw std::invalid_argument("unknown metric '" + metric + "'");
    }
  }
  const bool decode = wants(opts, "exact_match") || wants(opts, "idk_accuracy") || wants(opts, "needle_f1") ||
                      wants(opts, "position_bias");
  std::vector<TokenSeq> preds;
  if (decode) preds = predict_all(greedy_predictor(params), data);
  if (wants(opts, "exact_match")) m.exact_match = exact_match(data, preds);
  if (wants(opts, "idk_accuracy")) m.idk_accuracy = idk_accuracy(data, preds);
  if (wants(opts, "needle_f1")) m.needle_f1 = needle_f1(data, preds);
  if (wants(opts, "position_bias")) m.position_bias = position_bias_profile(data, preds);
  if (wants(opts, "consistency_jsd")) m.consistency_jsd = consistency_jsd(params, data, opts.num_perms, opts.seed);
  return m;
}

std::string report_csv(const RunReport& r) {
  std::string out = "dataset,metric,value\n";
  for (const auto& row : report_rows(r)) out += row.dataset + "," + row.metric + "," + row.value + "\n";
  return out;
}

std::string report_text(const RunReport& r) {
  const auto rows = report_rows(r);
  std::size_t w0 = 7, w1 = 6;
  for (const auto& row : rows) {
    w0 = std::max(w0, row.dataset.size());
    w1 = std::max(w1, row.metric.size());
  }
  std::ostringstream os;
  auto line = [&](const std::string& a, const std::string& b, const std::string& c) {
    os << a << std::string(w0 - a.size() + 2, ' ') << b << std::string(w1 - b.size() + 2, ' ') << c << '\n';
  };
  line("dataset", "metric", "value");
  line(std::string(w0, '-'), std::string(w1, '-'), "-----");
  for (const auto& row : rows) line(row.dataset, row.metric, row.value);
  os << "\nposition_bias_spread is max minus min per-rank accuracy (this tool's position-bias measure)\n";
  if (!r.config_echo.empty()) {
    os << "\nconfiguration\n";
    for (const auto& [k, v] : r.config_echo) os << "  " << k << " = " << v << '\n';
  }
  return os.str();
}

void emit_report(const RunReport& r, const std::filesystem::path& dir) {
  const std::string csv = report_csv(r);
  const std::string txt = report_text(r);
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << s;
    if (!out) throw std::runtime_error("write failed for " + p.string());
  };
  write(dir / "report.csv", csv);
  write(dir / "report.txt", txt);
  char buf[64];
  std::snprintf(buf, sizeof buf, "wall_clock_seconds=%.3f\n", r.wall_clock_seconds);
  write(dir / "timing.txt", buf);
}

}  // namespace cordlab
