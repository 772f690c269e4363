// SPDX-License-Identifier: Apache-2.0
#include "cordlab/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cordlab/rng.hpp"

namespace cordlab {

namespace {

int sample_pmf(Rng& rng, const std::vector<double>& pmf) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    acc += pmf[i];
    if (u < acc) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(pmf.size());
}

// k distinct values from [0, n), in draw order.
std::vector<int> distinct_sample(Rng& rng, int n, int k) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

// Ranks (1-based, ascending) of the k gold records.
std::vector<int> sample_gold_ranks(Rng& rng, const GenConfig& cfg, int k) {
  const int n = cfg.n_contexts;
  std::vector<int> ranks;
  switch (cfg.gold.kind) {
    case GoldRankDistribution::Kind::head_biased: {
      if (k != 1) throw ConfigError("gold_rank_distribution", "head_biased supports a single gold record");
      ranks.push_back(sample_pmf(rng, truncated_geometric(cfg.gold.p, n)));
      break;
    }
    case GoldRankDistribution::Kind::uniform:
      for (int r : distinct_sample(rng, n, k)) ranks.push_back(r + 1);
      break;
    case GoldRankDistribution::Kind::head_confined:
      for (int r : distinct_sample(rng, std::min(cfg.gold.max_rank, n), k)) ranks.push_back(r + 1);
      break;
  }
  std::sort(ranks.begin(), ranks.end());
  return ranks;
}

// Scores for ranks 1..n, strictly descending. `gap_after` (1-based, 0 = none)
// places the designed drop for informative scores.
std::vector<double> sample_scores(Rng& rng, const ScoreModel& sm, int n, int gap_after) {
  std::vector<double> s(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double v = sm.noise_sd * rng.normal();
    if (sm.kind == ScoreModel::Kind::informative) {
      v += 1.0 - sm.step * i;
      if (gap_after > 0 && i + 1 > gap_after) v -= sm.gap_size;
    } else {
      v += 0.5;
    }
    s[static_cast<std::size_t>(i)] = v;
  }
  std::sort(s.begin(), s.end(), std::greater<>());
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!(s[i] < s[i - 1])) s[i] = std::nextafter(s[i - 1], -INFINITY);
  }
  return s;
}

Context filler_record(Rng& rng, const VocabLayout& v) {
  const auto nf = static_cast<std::uint64_t>(v.n_fillers);
  return Context{{v.filler(static_cast<int>(rng.below(nf))), v.filler(static_cast<int>(rng.below(nf)))}, 0.0};
}

std::string make_id(const GenConfig& cfg, int i) { return cfg.id_prefix + "-" + std::to_string(i); }

Instance make_multi_needle(Rng& rng, const GenConfig& cfg, int index) {
  const VocabLayout& v = cfg.vocab;
  const int n = cfg.n_contexts;
  const int k = cfg.needles;
  const std::vector<int> ranks = sample_gold_ranks(rng, cfg, k);

  const int pool = cfg.query_end() - cfg.query_key_begin;
  std::vector<int> keys = distinct_sample(rng, pool, k);
  for (int& key : keys) key += cfg.query_key_begin;
  std::vector<int> values(static_cast<std::size_t>(k));
  for (int& val : values) val = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_values)));

  std::vector<Context> ctx(static_cast<std::size_t>(n));
  for (auto& c : ctx) c = filler_record(rng, v);
  for (int i = 0; i < k; ++i) {
    ctx[static_cast<std::size_t>(ranks[static_cast<std::size_t>(i)] - 1)] =
        Context{{v.key(keys[static_cast<std::size_t>(i)]), v.value(values[static_cast<std::size_t>(i)])}, 0.0};
  }
  const auto scores = sample_scores(rng, cfg.scores, n, 0);
  for (int i = 0; i < n; ++i) ctx[static_cast<std::size_t>(i)].score = scores[static_cast<std::size_t>(i)];

  std::vector<std::size_t> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  Instance inst;
  inst.id = make_id(cfg, index);
  for (auto o : order) {
    inst.question.push_back(v.key(keys[o]));
    inst.answer.push_back(v.value(values[o]));
  }
  inst.contexts = ContextSequence::from_retriever(std::move(ctx));
  inst.scenario = Scenario::multi_needle;
  inst.gold_ranks = ranks;
  return inst;
}

}  // namespace

ModelConfig model_config_for(const VocabLayout& vocab, int d_model, int n_layers, int n_heads, int max_seq_len) {
  ModelConfig c;
  c.vocab_size = vocab.vocab_size();
  c.d_model = d_model;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.max_seq_len = max_seq_len;
  c.separator_token = vocab.separator();
  c.idk_token = vocab.idk();
  return c;
}

std::vector<double> truncated_geometric(double p, int n) {
  std::vector<double> pmf(static_cast<std::size_t>(n));
  double z = 0.0;
  for (int r = 1; r <= n; ++r) {
    pmf[static_cast<std::size_t>(r - 1)] = p * std::pow(1.0 - p, r - 1);
    z += pmf[static_cast<std::size_t>(r - 1)];
  }
  for (double& x : pmf) x /= z;
  return pmf;
}

void GenConfig::validate(Scenario scenario) const {
  if (n_contexts < 2) throw ConfigError("n_contexts", "must be >= 2");
  if (n_instances < 0) throw ConfigError("n_instances", "must be >= 0");
  if (vocab.n_keys < 1 || vocab.n_values < 2 || vocab.n_fillers < 1) {
    throw ConfigError("vocab", "key, value and filler ranges must be non-empty");
  }
  if (needles < 1) throw ConfigError("needles", "must be >= 1");
  if (needles > n_contexts) throw ConfigError("needles", "exceeds n_contexts");
  if (query_key_begin < 0 || query_end() > vocab.n_keys || query_end() <= query_key_begin) {
    throw ConfigError("query_keys", "range must lie inside the key range");
  }
  if (conflicts < 0) throw ConfigError("conflicts", "must be >= 0");
  if (conflict_max_rank < 0) throw ConfigError("conflict_max_rank", "must be >= 0");
  if (!(scores.noise_sd >= 0.0)) throw ConfigError("score_model", "noise_sd must be >= 0");
  if (gold.kind == GoldRankDistribution::Kind::head_biased && !(gold.p > 0.0 && gold.p <= 1.0)) {
    throw ConfigError("gold_rank_distribution", "geometric p must lie in (0, 1]");
  }
  if (gold.kind == GoldRankDistribution::Kind::head_confined &&
      (gold.max_rank < needles || gold.max_rank > n_contexts)) {
    throw ConfigError("gold_rank_distribution", "max_rank must lie in [needles, n_contexts]");
  }
  if (scenario == Scenario::rank_prior) {
    if (needles != 1) throw ConfigError("needles", "rank_prior uses a single gold record");
    if (vocab.n_keys < n_contexts) throw ConfigError("vocab", "rank_prior needs at least n_contexts keys");
  } else {
    if (needles < 2) throw ConfigError("needles", "multi-needle needs at least two needles");
    if (query_end() - query_key_begin < needles) throw ConfigError("query_keys", "fewer keys than needles");
  }
}

Dataset gen_rank_prior_dataset(const GenConfig& cfg) {
  cfg.validate(Scenario::rank_prior);
  const VocabLayout& v = cfg.vocab;
  const int n = cfg.n_contexts;
  Rng rng(cfg.seed);
  Dataset d;
  d.vocab_size = v.vocab_size();
  d.split = cfg.split;
  d.instances.reserve(static_cast<std::size_t>(cfg.n_instances));
  for (int idx = 0; idx < cfg.n_instances; ++idx) {
    const int r = sample_gold_ranks(rng, cfg, 1).front();
    const int q = cfg.query_key_begin +
                  static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.query_end() - cfg.query_key_begin)));
    const int gold_value = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_values)));

    std::vector<Context> ctx(static_cast<std::size_t>(n));
    ctx[static_cast<std::size_t>(r - 1)] = Context{{v.key(q), v.value(gold_value)}, 0.0};

    // Stale records: same key, different value, directly below the gold.
    const int window = cfg.conflict_max_rank > 0 ? std::min(cfg.conflict_max_rank, n) : n;
    const int n_conf = std::clamp(window - r, 0, cfg.conflicts);
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    taken[static_cast<std::size_t>(r - 1)] = true;
    for (int i = 0; i < n_conf; ++i) {
      int val = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_values - 1)));
      if (val >= gold_value) ++val;
      ctx[static_cast<std::size_t>(r + i)] = Context{{v.key(q), v.value(val)}, 0.0};
      taken[static_cast<std::size_t>(r + i)] = true;
    }
    // Remaining records use distinct keys other than q.
    std::vector<int> others = distinct_sample(rng, v.n_keys - 1, n - 1);
    std::size_t next_key = 0;
    for (int i = 0; i < n; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      int key = others[next_key++];
      if (key >= q) ++key;
      const int val = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_values)));
      ctx[static_cast<std::size_t>(i)] = Context{{v.key(key), v.value(val)}, 0.0};
    }
    const int block_end = r + n_conf;
    const auto scores = sample_scores(rng, cfg.scores, n, block_end < n ? block_end : 0);
    for (int i = 0; i < n; ++i) ctx[static_cast<std::size_t>(i)].score = scores[static_cast<std::size_t>(i)];

    Instance inst;
    inst.id = make_id(cfg, idx);
    inst.question = {v.key(q)};
    inst.contexts = ContextSequence::from_retriever(std::move(ctx));
    inst.answer = {v.value(gold_value)};
    inst.scenario = Scenario::rank_prior;
    inst.gold_ranks = {r};
    d.instances.push_back(std::move(inst));
  }
  return d;
}

Dataset gen_multi_needle_dataset(const GenConfig& cfg) {
  cfg.validate(Scenario::multi_needle);
  Rng rng(cfg.seed);
  Dataset d;
  d.vocab_size = cfg.vocab.vocab_size();
  d.split = cfg.split;
  d.instances.reserve(static_cast<std::size_t>(cfg.n_instances));
  for (int i = 0; i < cfg.n_instances; ++i) d.instances.push_back(make_multi_needle(rng, cfg, i));
  return d;
}

Dataset gen_idk_split(const GenConfig& cfg) {
  cfg.validate(Scenario::multi_needle_idk);
  Rng rng(cfg.seed);
  Dataset d;
  d.vocab_size = cfg.vocab.vocab_size();
  d.split = cfg.split;
  d.instances.reserve(static_cast<std::size_t>(cfg.n_instances));
  for (int i = 0; i < cfg.n_instances; ++i) {
    Instance inst = make_multi_needle(rng, cfg, i);
    const int drop = inst.gold_ranks[rng.below(inst.gold_ranks.size())];
    std::vector<Context> ctx = inst.contexts.contexts();
    const double score = ctx[static_cast<std::size_t>(drop - 1)].score;
    ctx[static_cast<std::size_t>(drop - 1)] = filler_record(rng, cfg.vocab);
    ctx[static_cast<std::size_t>(drop - 1)].score = score;
    inst.contexts = ContextSequence::from_retriever(std::move(ctx));
    inst.answer = {cfg.vocab.idk()};
    inst.gold_ranks.clear();
    inst.scenario = Scenario::multi_needle_idk;
    d.instances.push_back(std::move(inst));
  }
  return d;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.vocab_size != b.vocab_size) throw std::invalid_argument("concat: vocabulary sizes differ");
  Dataset out = a;
  out.instances.insert(out.instances.end(), b.instances.begin(), b.instances.end());
  return out;
}

}  // namespace cordlab
