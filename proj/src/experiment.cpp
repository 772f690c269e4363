// SPDX-License-Identifier: Apache-2.0
#include "cordlab/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cordlab/rng.hpp"

namespace cordlab {

namespace {

using nlohmann::json;

// Stream ids for seed derivation.
enum : std::uint64_t {
  kTrainData = 1,
  kTestData,
  kIdkTrainData,
  kIdkTestData,
  kInit,
  kFinetune,
  kEval,
  kPretrainData,
  kPretrainInit,
  kPretrainTrain,
};

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown fields.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
        out = v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
        out = v.get<std::string>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned() || v.get<long long>() >= 0) {
            out = v.get<T>();
          } else {
            throw ConfigError(field(key), "must be non-negative");
          }
        } else {
          out = v.get<T>();
        }
      } else {
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
        out = v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError(field(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& field, const std::string& s, std::initializer_list<std::pair<const char*, E>> table) {
  std::string names;
  for (const auto& [name, value] : table) {
    if (s == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(field, "unknown value '" + s + "' (expected one of: " + names + ")");
}

std::string gold_name(GoldRankDistribution::Kind k) {
  switch (k) {
    case GoldRankDistribution::Kind::head_biased: return "head_biased";
    case GoldRankDistribution::Kind::uniform: return "uniform";
    case GoldRankDistribution::Kind::head_confined: return "head_confined";
  }
  return "?";
}

Scenario parse_scenario(const std::string& field, const std::string& s) {
  return parse_enum<Scenario>(field, s, {{"rank_prior", Scenario::rank_prior}, {"multi_needle", Scenario::multi_needle}});
}

// Layout fields shared by the data section and pretraining sets.
void read_gen(Section& s, GenConfig& g) {
  s.get("n_contexts", g.n_contexts);
  s.get("n_keys", g.vocab.n_keys);
  s.get("n_values", g.vocab.n_values);
  s.get("n_fillers", g.vocab.n_fillers);
  s.get("query_key_begin", g.query_key_begin);
  s.get("query_key_end", g.query_key_end);
  std::string gold = gold_name(g.gold.kind);
  s.get("gold", gold);
  g.gold.kind = parse_enum<GoldRankDistribution::Kind>(s.field("gold"), gold,
                                                       {{"head_biased", GoldRankDistribution::Kind::head_biased},
                                                        {"uniform", GoldRankDistribution::Kind::uniform},
                                                        {"head_confined", GoldRankDistribution::Kind::head_confined}});
  s.get("gold_p", g.gold.p);
  s.get("gold_max_rank", g.gold.max_rank);
  std::string scores = g.scores.kind == ScoreModel::Kind::informative ? "informative" : "uninformative";
  s.get("scores", scores);
  g.scores.kind = parse_enum<ScoreModel::Kind>(
      s.field("scores"), scores,
      {{"informative", ScoreModel::Kind::informative}, {"uninformative", ScoreModel::Kind::uninformative}});
  s.get("score_gap", g.scores.gap_size);
  s.get("score_step", g.scores.step);
  s.get("score_noise_sd", g.scores.noise_sd);
  s.get("needles", g.needles);
  s.get("conflicts", g.conflicts);
  s.get("conflict_max_rank", g.conflict_max_rank);
}

json gen_json(const GenConfig& g) {
  return json{{"n_contexts", g.n_contexts},
              {"n_keys", g.vocab.n_keys},
              {"n_values", g.vocab.n_values},
              {"n_fillers", g.vocab.n_fillers},
              {"query_key_begin", g.query_key_begin},
              {"query_key_end", g.query_end()},
              {"gold", gold_name(g.gold.kind)},
              {"gold_p", g.gold.p},
              {"gold_max_rank", g.gold.max_rank},
              {"scores", g.scores.kind == ScoreModel::Kind::informative ? "informative" : "uninformative"},
              {"score_gap", g.scores.gap_size},
              {"score_step", g.scores.step},
              {"score_noise_sd", g.scores.noise_sd},
              {"needles", g.needles},
              {"conflicts", g.conflicts},
              {"conflict_max_rank", g.conflict_max_rank}};
}

void read_train(Section& s, TrainConfig& tc) {
  std::string mode(to_string(tc.mode));
  s.get("mode", mode);
  try {
    tc.mode = train_mode_from_string(mode);
  } catch (const std::invalid_argument&) {
    throw ConfigError(s.field("mode"), "unknown training mode '" + mode + "'");
  }
  s.get("lambda", tc.lambda);
  std::string policy = tc.alpha_policy.kind == AlphaPolicy::Kind::fixed ? "fixed" : "score_aware";
  s.get("alpha_policy", policy);
  tc.alpha_policy.kind = parse_enum<AlphaPolicy::Kind>(
      s.field("alpha_policy"), policy, {{"fixed", AlphaPolicy::Kind::fixed}, {"score_aware", AlphaPolicy::Kind::score_aware}});
  s.get("alpha", tc.alpha_policy.alpha);
  std::string cmode = tc.consistency_mode.variant == ConsistencyMode::Variant::all_steps ? "all_steps" : "first_k";
  s.get("consistency_mode", cmode);
  tc.consistency_mode.variant = parse_enum<ConsistencyMode::Variant>(
      s.field("consistency_mode"), cmode,
      {{"all_steps", ConsistencyMode::Variant::all_steps}, {"first_k", ConsistencyMode::Variant::first_k}});
  s.get("consistency_k", tc.consistency_mode.k);
  s.get("epochs", tc.epochs);
  s.get("batch_size", tc.batch_size);
  s.get("learning_rate", tc.learning_rate);
  s.get("adam_beta1", tc.adam_beta1);
  s.get("adam_beta2", tc.adam_beta2);
  s.get("adam_eps", tc.adam_eps);
  s.get("weight_decay", tc.weight_decay);
  s.get("linear_decay", tc.linear_decay);
  std::string scoring = tc.teacher_scoring == TeacherScoring::live ? "live" : "frozen_initial";
  s.get("teacher_scoring", scoring);
  tc.teacher_scoring = parse_enum<TeacherScoring>(
      s.field("teacher_scoring"), scoring, {{"live", TeacherScoring::live}, {"frozen_initial", TeacherScoring::frozen_initial}});
  std::string ov = "none";
  if (tc.teacher_override == TeacherOverride::force_interp) ov = "force_interp";
  if (tc.teacher_override == TeacherOverride::force_full) ov = "force_full";
  s.get("teacher_override", ov);
  tc.teacher_override = parse_enum<TeacherOverride>(s.field("teacher_override"), ov,
                                                    {{"none", TeacherOverride::none},
                                                     {"force_interp", TeacherOverride::force_interp},
                                                     {"force_full", TeacherOverride::force_full}});
  s.get("stop_gradient_teacher", tc.stop_gradient_teacher);
  try {
    tc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(s.field(e.field()), std::string(e.what()).substr(e.field().size() + 2));
  }
}

json train_json(const TrainConfig& tc) {
  std::string ov = "none";
  if (tc.teacher_override == TeacherOverride::force_interp) ov = "force_interp";
  if (tc.teacher_override == TeacherOverride::force_full) ov = "force_full";
  return json{{"mode", std::string(to_string(tc.mode))},
              {"lambda", tc.lambda},
              {"alpha_policy", tc.alpha_policy.kind == AlphaPolicy::Kind::fixed ? "fixed" : "score_aware"},
              {"alpha", tc.alpha_policy.alpha},
              {"consistency_mode",
               tc.consistency_mode.variant == ConsistencyMode::Variant::all_steps ? "all_steps" : "first_k"},
              {"consistency_k", tc.consistency_mode.k},
              {"epochs", tc.epochs},
              {"batch_size", tc.batch_size},
              {"learning_rate", tc.learning_rate},
              {"adam_beta1", tc.adam_beta1},
              {"adam_beta2", tc.adam_beta2},
              {"adam_eps", tc.adam_eps},
              {"weight_decay", tc.weight_decay},
              {"linear_decay", tc.linear_decay},
              {"teacher_scoring", tc.teacher_scoring == TeacherScoring::live ? "live" : "frozen_initial"},
              {"teacher_override", ov},
              {"stop_gradient_teacher", tc.stop_gradient_teacher}};
}

void validate_gen(const std::string& field, const GenConfig& g, Scenario scenario) {
  try {
    g.validate(scenario);
  } catch (const ConfigError& e) {
    throw ConfigError(field + "." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }
}

// The longest input the data can produce must fit the model.
void check_length(const GenConfig& g, Scenario scenario, const ModelConfig& mc, const std::string& field) {
  const int q = scenario == Scenario::rank_prior ? 1 : g.needles;
  std::vector<Context> ctx(static_cast<std::size_t>(g.n_contexts), Context{{Token{0}, Token{0}}, 0.0});
  try {
    (void)assemble_input(TokenSeq(static_cast<std::size_t>(q), Token{0}), ContextSequence(ctx),
                         TokenSeq(static_cast<std::size_t>(q), Token{0}), mc);
  } catch (const LengthError& e) {
    throw ConfigError("model.max_seq_len", std::string(e.what()) + " for " + field);
  }
}

std::vector<std::string> default_metrics(Scenario s) {
  if (s == Scenario::rank_prior) return {"exact_match", "position_bias"};
  return {"exact_match", "needle_f1", "position_bias", "consistency_jsd"};
}

json spec_json(const ExperimentSpec& spec) {
  json data = gen_json(spec.data.gen);
  data["scenario"] = std::string(to_string(spec.data.scenario));
  data["n_train"] = spec.data.n_train;
  data["n_test"] = spec.data.n_test;
  data["n_idk_train"] = spec.data.n_idk_train;
  data["n_idk_test"] = spec.data.n_idk_test;
  json model{{"d_model", spec.model.d_model},
             {"n_layers", spec.model.n_layers},
             {"n_heads", spec.model.n_heads},
             {"max_seq_len", spec.model.max_seq_len},
             {"init_weight_scale", spec.model.init.weight_scale},
             {"init_embed_scale", spec.model.init.embed_scale},
             {"init_checkpoint", spec.model.init_checkpoint}};
  json out{{"seed", spec.seed},
           {"data", data},
           {"model", model},
           {"train", train_json(spec.train)},
           {"eval", json{{"metrics", spec.eval.metrics}, {"num_perms", spec.eval.num_perms}}}};
  if (spec.pretrain) {
    json sets = json::array();
    for (const auto& ps : spec.pretrain->sets) {
      json g = gen_json(ps.gen);
      g["scenario"] = std::string(to_string(ps.scenario));
      g["n_instances"] = ps.gen.n_instances;
      sets.push_back(g);
    }
    out["pretrain"] = json{{"seed", spec.pretrain->seed}, {"sets", sets}, {"train", train_json(spec.pretrain->train)}};
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

ModelConfig ExperimentSpec::model_config() const {
  return model_config_for(data.gen.vocab, model.d_model, model.n_layers, model.n_heads, model.max_seq_len);
}

ExperimentSpec parse_experiment(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
  }
  ExperimentSpec spec;
  Section top(root, "");
  top.get("seed", spec.seed);

  if (!top.has("data")) throw ConfigError("data", "section is required");
  {
    Section s(top.raw("data"), "data");
    std::string scenario = "rank_prior";
    s.get("scenario", scenario);
    spec.data.scenario = parse_scenario(s.field("scenario"), scenario);
    read_gen(s, spec.data.gen);
    s.get("n_train", spec.data.n_train);
    s.get("n_test", spec.data.n_test);
    s.get("n_idk_train", spec.data.n_idk_train);
    s.get("n_idk_test", spec.data.n_idk_test);
    s.finish();
    for (const auto& [k, v] : {std::pair{"n_train", spec.data.n_train}, std::pair{"n_test", spec.data.n_test},
                               std::pair{"n_idk_train", spec.data.n_idk_train},
                               std::pair{"n_idk_test", spec.data.n_idk_test}}) {
      if (v < 0) throw ConfigError(s.field(k), "must be >= 0");
    }
    if (spec.data.n_test < 1) throw ConfigError("data.n_test", "must be >= 1");
    if (spec.data.scenario == Scenario::rank_prior && (spec.data.n_idk_train > 0 || spec.data.n_idk_test > 0)) {
      throw ConfigError(spec.data.n_idk_train > 0 ? "data.n_idk_train" : "data.n_idk_test",
                        "IDK splits need the multi_needle scenario");
    }
    validate_gen("data", spec.data.gen, spec.data.scenario);
  }

  if (top.has("model")) {
    Section s(top.raw("model"), "model");
    s.get("d_model", spec.model.d_model);
    s.get("n_layers", spec.model.n_layers);
    s.get("n_heads", spec.model.n_heads);
    s.get("max_seq_len", spec.model.max_seq_len);
    s.get("init_weight_scale", spec.model.init.weight_scale);
    s.get("init_embed_scale", spec.model.init.embed_scale);
    s.get("init_checkpoint", spec.model.init_checkpoint);
    s.finish();
  }
  const ModelConfig mc = spec.model_config();
  try {
    mc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("model." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }
  if (!(spec.model.init.weight_scale > 0.0) || !(spec.model.init.embed_scale > 0.0)) {
    throw ConfigError("model.init_weight_scale", "init scales must be > 0");
  }
  check_length(spec.data.gen, spec.data.scenario, mc, "data");

  if (top.has("pretrain")) {
    Section s(top.raw("pretrain"), "pretrain");
    PretrainSpec p;
    p.train.mode = TrainMode::nll_given;
    s.get("seed", p.seed);
    if (!s.has("sets") || !s.raw("sets").is_array() || s.raw("sets").empty()) {
      throw ConfigError("pretrain.sets", "must be a non-empty array");
    }
    const json& sets = s.raw("sets");
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const std::string path = "pretrain.sets[" + std::to_string(i) + "]";
      Section ss(sets[i], path);
      PretrainSet set;
      set.gen = spec.data.gen;
      std::string scenario(to_string(spec.data.scenario));
      ss.get("scenario", scenario);
      set.scenario = parse_scenario(ss.field("scenario"), scenario);
      read_gen(ss, set.gen);
      if (!ss.has("n_instances")) throw ConfigError(ss.field("n_instances"), "is required");
      ss.get("n_instances", set.gen.n_instances);
      ss.finish();
      const VocabLayout& a = set.gen.vocab;
      const VocabLayout& b = spec.data.gen.vocab;
      if (a.n_keys != b.n_keys || a.n_values != b.n_values || a.n_fillers != b.n_fillers) {
        throw ConfigError(path, "vocabulary must match the data section");
      }
      validate_gen(path, set.gen, set.scenario);
      check_length(set.gen, set.scenario, mc, path);
      p.sets.push_back(std::move(set));
    }
    if (s.has("train")) {
      Section st(s.raw("train"), "pretrain.train");
      read_train(st, p.train);
      st.finish();
    }
    s.finish();
    spec.pretrain = std::move(p);
  }

  if (top.has("train")) {
    Section s(top.raw("train"), "train");
    read_train(s, spec.train);
    s.finish();
  }

  spec.eval.metrics = default_metrics(spec.data.scenario);
  if (top.has("eval")) {
    Section s(top.raw("eval"), "eval");
    if (s.has("metrics")) {
      const json& m = s.raw("metrics");
      if (!m.is_array()) throw ConfigError("eval.metrics", "expected an array of metric names");
      spec.eval.metrics.clear();
      for (const auto& x : m) {
        if (!x.is_string()) throw ConfigError("eval.metrics", "expected an array of metric names");
        spec.eval.metrics.push_back(x.get<std::string>());
      }
    }
    s.get("num_perms", spec.eval.num_perms);
    s.finish();
  }
  for (const auto& m : spec.eval.metrics) {
    if (std::find(kMetricNames.begin(), kMetricNames.end(), m) == kMetricNames.end()) {
      throw ConfigError("eval.metrics", "unknown metric '" + m + "'");
    }
    if (m == "idk_accuracy") {
      throw ConfigError("eval.metrics", "idk_accuracy is reported on the IDK test split; set data.n_idk_test instead");
    }
  }
  if (spec.eval.metrics.empty()) throw ConfigError("eval.metrics", "must name at least one metric");
  if (spec.eval.num_perms < 1) throw ConfigError("eval.num_perms", "must be >= 1");
  top.finish();
  return spec;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str());
}

std::string effective_config_json(const ExperimentSpec& spec) { return spec_json(spec).dump(2) + "\n"; }

std::string config_hash(const ExperimentSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : spec_json(spec).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

DerivedSeeds derived_seeds(const ExperimentSpec& spec) {
  const std::uint64_t s = spec.seed;
  const std::uint64_t p = spec.pretrain ? spec.pretrain->seed : 0;
  return {derive_seed(s, kTrainData),     derive_seed(s, kTestData),     derive_seed(s, kIdkTrainData),
          derive_seed(s, kIdkTestData),   derive_seed(s, kInit),         derive_seed(s, kFinetune),
          derive_seed(s, kEval),          derive_seed(p, kPretrainData), derive_seed(p, kPretrainInit),
          derive_seed(p, kPretrainTrain)};
}

std::string manifest_json(const ExperimentSpec& spec) {
  const DerivedSeeds d = derived_seeds(spec);
  json seeds{{"train_data", d.train_data},         {"test_data", d.test_data},     {"idk_train_data", d.idk_train_data},
             {"idk_test_data", d.idk_test_data},   {"init", d.init},               {"finetune", d.finetune},
             {"eval", d.eval},                     {"pretrain_data", d.pretrain_data},
             {"pretrain_init", d.pretrain_init},   {"pretrain_train", d.pretrain_train}};
  json m{{"config_hash", config_hash(spec)}, {"seed", spec.seed}, {"derived_seeds", seeds}, {"config", spec_json(spec)}};
  return m.dump(2) + "\n";
}

GeneratedData generate(const ExperimentSpec& spec) {
  const DerivedSeeds seeds = derived_seeds(spec);
  auto make = [&](Scenario scenario, int n, std::uint64_t seed, Split split, const std::string& prefix) {
    GenConfig g = spec.data.gen;
    g.n_instances = n;
    g.seed = seed;
    g.split = split;
    g.id_prefix = prefix;
    if (scenario == Scenario::rank_prior) return gen_rank_prior_dataset(g);
    if (scenario == Scenario::multi_needle) return gen_multi_needle_dataset(g);
    return gen_idk_split(g);
  };
  GeneratedData out;
  out.train = make(spec.data.scenario, spec.data.n_train, seeds.train_data, Split::train, "train");
  out.test = make(spec.data.scenario, spec.data.n_test, seeds.test_data, Split::test, "test");
  if (spec.data.n_idk_train > 0) {
    out.idk_train = make(Scenario::multi_needle_idk, spec.data.n_idk_train, seeds.idk_train_data, Split::train, "idk-train");
  }
  if (spec.data.n_idk_test > 0) {
    out.idk_test = make(Scenario::multi_needle_idk, spec.data.n_idk_test, seeds.idk_test_data, Split::test, "idk-test");
  }
  if (spec.pretrain) {
    Dataset all;
    all.vocab_size = spec.data.gen.vocab.vocab_size();
    for (std::size_t i = 0; i < spec.pretrain->sets.size(); ++i) {
      const PretrainSet& ps = spec.pretrain->sets[i];
      GenConfig g = ps.gen;
      g.seed = derive_seed(seeds.pretrain_data, i);
      g.id_prefix = "pre" + std::to_string(i);
      all = concat(all, ps.scenario == Scenario::rank_prior ? gen_rank_prior_dataset(g) : gen_multi_needle_dataset(g));
    }
    out.pretrain = std::move(all);
  }
  return out;
}

ModelParams base_model(const ExperimentSpec& spec, const std::optional<Dataset>& pretrain_data, TrainLog* pretrain_log) {
  const ModelConfig mc = spec.model_config();
  if (!spec.model.init_checkpoint.empty()) {
    ModelParams p = load_checkpoint(spec.model.init_checkpoint);
    if (!(p.config == mc)) {
      throw std::runtime_error("checkpoint " + spec.model.init_checkpoint + " was built for a different model config");
    }
    return p;
  }
  const DerivedSeeds seeds = derived_seeds(spec);
  if (!spec.pretrain) return init_params(mc, seeds.init, spec.model.init);
  if (!pretrain_data) throw std::invalid_argument("base_model: pretraining data required");
  TrainConfig tc = spec.pretrain->train;
  tc.seed = seeds.pretrain_train;
  TrainResult r = train(tc, *pretrain_data, init_params(mc, seeds.pretrain_init, spec.model.init));
  if (pretrain_log) *pretrain_log = std::move(r.log);
  return std::move(r.params);
}

TrainResult finetune(const ExperimentSpec& spec, const GeneratedData& data, const ModelParams& base) {
  TrainConfig tc = spec.train;
  tc.seed = derived_seeds(spec).finetune;
  if (data.idk_train) return train(tc, concat(data.train, *data.idk_train), base);
  return train(tc, data.train, base);
}

RunReport evaluate_run(const ExperimentSpec& spec, const ModelParams& params, const Dataset& test,
                       const std::optional<Dataset>& idk_test, std::span<const SelectionRecord> selections) {
  if (!(params.config == spec.model_config())) {
    throw std::runtime_error("checkpoint model config does not match the experiment config");
  }
  RunReport r;
  r.seed = spec.seed;
  EvalOptions opts = spec.eval;
  opts.seed = derived_seeds(spec).eval;
  r.datasets.push_back(evaluate(params, test, "test", opts));
  if (idk_test) r.datasets.push_back(evaluate(params, *idk_test, "idk_test", EvalOptions{{"idk_accuracy"}, 1, opts.seed}));
  if (!selections.empty()) r.pairing_ratio = summarize_selections(selections).ratio;
  r.config_echo = {{"config_hash", config_hash(spec)},
                   {"scenario", std::string(to_string(spec.data.scenario))},
                   {"mode", std::string(to_string(spec.train.mode))},
                   {"lambda", format_real(spec.train.lambda)},
                   {"alpha_policy", spec.train.alpha_policy.kind == AlphaPolicy::Kind::fixed
                                        ? "fixed(" + format_real(spec.train.alpha_policy.alpha) + ")"
                                        : std::string("score_aware")},
                   {"consistency_mode", spec.train.consistency_mode.variant == ConsistencyMode::Variant::all_steps
                                            ? std::string("all_steps")
                                            : "first_k(" + std::to_string(spec.train.consistency_mode.k) + ")"},
                   {"epochs", std::to_string(spec.train.epochs)}};
  return r;
}

SelectionSummary summarize_selections(std::span<const SelectionRecord> records) {
  if (records.empty()) throw std::invalid_argument("selection log is empty");
  std::map<int, std::pair<std::size_t, std::pair<std::size_t, double>>> by_epoch;  // epoch -> (n, (interp, sum alpha))
  std::size_t interp = 0;
  double alpha = 0.0;
  for (const auto& r : records) {
    auto& e = by_epoch[r.epoch];
    ++e.first;
    if (r.which == TeacherKind::interp) {
      ++e.second.first;
      ++interp;
    }
    e.second.second += r.alpha;
    alpha += r.alpha;
  }
  SelectionSummary s;
  for (const auto& [epoch, e] : by_epoch) {
    const double n = static_cast<double>(e.first);
    s.epochs.push_back({epoch, e.first, static_cast<double>(e.second.first) / n, e.second.second / n});
  }
  s.ratio = static_cast<double>(interp) / static_cast<double>(records.size());
  s.mean_alpha = alpha / static_cast<double>(records.size());
  return s;
}

std::string selection_summary_csv(const SelectionSummary& s) {
  std::string out = "epoch,ratio,mean_alpha\n";
  for (const auto& e : s.epochs) {
    out += std::to_string(e.epoch) + "," + format_real(e.ratio) + "," + format_real(e.mean_alpha) + "\n";
  }
  return out;
}

}  // namespace cordlab
