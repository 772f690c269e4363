// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cordlab/experiment.hpp"

using namespace cordlab;
using nlohmann::json;

namespace {

json minimal() {
  return json{{"data", {{"scenario", "rank_prior"}, {"n_contexts", 4}, {"n_keys", 6}, {"n_values", 4}, {"n_fillers", 2},
                        {"n_train", 8}, {"n_test", 4}}},
              {"model", {{"d_model", 8}, {"n_layers", 1}, {"n_heads", 2}, {"max_seq_len", 24}}}};
}

std::string field_of(const json& j) {
  try {
    parse_experiment(j.dump());
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST(Experiment, DefaultsAreFilledIn) {
  const auto spec = parse_experiment(minimal().dump());
  EXPECT_EQ(spec.train.mode, TrainMode::cord);
  EXPECT_EQ(spec.train.lambda, 10.0);
  EXPECT_EQ(spec.eval.metrics, (std::vector<std::string>{"exact_match", "position_bias"}));
  const auto eff = json::parse(effective_config_json(spec));
  EXPECT_EQ(eff.at("train").at("alpha"), 0.5);
  EXPECT_EQ(eff.at("data").at("n_train"), 8);
}

TEST(Experiment, ErrorsNameTheField) {
  auto j = minimal();
  j["train"] = {{"lamda", 1.0}};
  EXPECT_EQ(field_of(j), "train.lamda");
  j = minimal();
  j["train"] = {{"lambda", "big"}};
  EXPECT_EQ(field_of(j), "train.lambda");
  j = minimal();
  j["train"] = {{"mode", "distill"}};
  EXPECT_EQ(field_of(j), "train.mode");
  j = minimal();
  j["data"]["scenario"] = "multi_needle";
  j["data"]["needles"] = 6;
  EXPECT_EQ(field_of(j), "data.needles");
  j = minimal();
  j["model"]["max_seq_len"] = 8;
  EXPECT_EQ(field_of(j), "model.max_seq_len");
  j = minimal();
  j["data"]["n_idk_test"] = 4;
  EXPECT_EQ(field_of(j), "data.n_idk_test");
  j = minimal();
  j["eval"] = {{"metrics", {"exact_match", "rouge"}}};
  EXPECT_EQ(field_of(j), "eval.metrics");
  j = minimal();
  j.erase("data");
  EXPECT_EQ(field_of(j), "data");
  EXPECT_THROW(parse_experiment("{not json"), ConfigError);
}

TEST(Experiment, HashTracksEffectiveConfig) {
  const auto a = parse_experiment(minimal().dump());
  auto j = minimal();
  j["train"] = {{"lambda", 10.0}};  // the default spelled out
  EXPECT_EQ(config_hash(a), config_hash(parse_experiment(j.dump())));
  j["train"] = {{"lambda", 1.0}};
  EXPECT_NE(config_hash(a), config_hash(parse_experiment(j.dump())));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Experiment, PretrainSeedsIgnoreRootSeed) {
  auto j = minimal();
  j["pretrain"] = {{"seed", 5}, {"sets", {{{"scenario", "rank_prior"}, {"n_instances", 10}}}}};
  auto a = parse_experiment(j.dump());
  auto b = a;
  b.seed = a.seed + 1;
  const auto sa = derived_seeds(a), sb = derived_seeds(b);
  EXPECT_EQ(sa.pretrain_data, sb.pretrain_data);
  EXPECT_EQ(sa.pretrain_init, sb.pretrain_init);
  EXPECT_NE(sa.train_data, sb.train_data);
  EXPECT_NE(sa.init, sb.init);
  EXPECT_NE(sa.train_data, sa.test_data);
  EXPECT_EQ(generate(a).pretrain, generate(b).pretrain);
}

TEST(Experiment, GenerateIsDeterministic) {
  const auto spec = parse_experiment(minimal().dump());
  const auto a = generate(spec), b = generate(spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train.instances.size(), 8u);
  EXPECT_EQ(a.train.instances[0].id, "train-0");
}

TEST(Experiment, EvaluateRejectsForeignCheckpoint) {
  const auto spec = parse_experiment(minimal().dump());
  auto mc = spec.model_config();
  mc.d_model = 16;
  const auto p = init_params(mc, 1);
  EXPECT_THROW(evaluate_run(spec, p, generate(spec).test, std::nullopt, {}), std::runtime_error);
}

TEST(SelectionSummary, PerEpochRatioAndAlpha) {
  std::vector<SelectionRecord> r{{0, "a", TeacherKind::interp, 0.5, 0, 0},
                                 {0, "b", TeacherKind::full, 0.25, 0, 0},
                                 {1, "a", TeacherKind::interp, 1.0, 0, 0},
                                 {1, "b", TeacherKind::interp, 0.5, 0, 0}};
  const auto s = summarize_selections(r);
  ASSERT_EQ(s.epochs.size(), 2u);
  EXPECT_EQ(s.epochs[0].ratio, 0.5);
  EXPECT_EQ(s.epochs[0].mean_alpha, 0.375);
  EXPECT_EQ(s.epochs[1].ratio, 1.0);
  EXPECT_EQ(s.ratio, 0.75);
  EXPECT_EQ(s.mean_alpha, 0.5625);
  EXPECT_EQ(selection_summary_csv(s), "epoch,ratio,mean_alpha\n0,0.5,0.375\n1,1,0.75\n");
  EXPECT_THROW(summarize_selections(std::vector<SelectionRecord>{}), std::invalid_argument);
}
