// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "cordlab/data_model.hpp"
#include "cordlab/taskgen.hpp"

using namespace cordlab;

namespace {

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cordlab_dm_" + name);
}

void write(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

Instance small() {
  Instance i;
  i.id = "x";
  i.question = make_tokens({0});
  i.contexts = ContextSequence::from_retriever(
      {Context{make_tokens({0, 4}), 0.9}, Context{make_tokens({1, 5}), 0.5}, Context{make_tokens({2, 6}), 0.1}});
  i.answer = make_tokens({4});
  i.gold_ranks = {1};
  return i;
}

}  // namespace

TEST(Dataset, EmptyFileGivesNoInstances) {
  write(tmp("empty.jsonl"), "");
  EXPECT_TRUE(load_dataset(tmp("empty.jsonl"), 10).instances.empty());
}

TEST(Dataset, EmptyDatasetSavesEmptyFile) {
  Dataset d;
  d.vocab_size = 8;
  save_dataset(d, tmp("zero.jsonl"));
  EXPECT_EQ(std::filesystem::file_size(tmp("zero.jsonl")), 0u);
}

TEST(Dataset, SingleRecordRoundTrip) {
  Dataset d;
  d.vocab_size = 10;
  d.instances.push_back(small());
  save_dataset(d, tmp("one.jsonl"));
  const auto back = load_dataset(tmp("one.jsonl"), 10);
  ASSERT_EQ(back.instances.size(), 1u);
  EXPECT_EQ(back.instances[0].contexts.size(), 3u);
  EXPECT_EQ(back, d);
}

TEST(Dataset, GeneratedRoundTripAndScorePrecision) {
  GenConfig g;
  g.n_instances = 200;
  g.conflicts = 2;
  g.scores = ScoreModel::informative(0.5, 0.01);
  g.gold = GoldRankDistribution::head_biased(0.4);
  auto d = gen_rank_prior_dataset(g);
  auto ctx = d.instances[0].contexts.contexts();
  ctx[0].score = 10.0;
  ctx[1].score = 1.0 / 3.0;
  ctx[2].score = 0.1 - 1e-9;
  d.instances[0].contexts = ContextSequence(ctx);
  save_dataset(d, tmp("gen.jsonl"));
  const auto back = load_dataset(tmp("gen.jsonl"), d.vocab_size);
  EXPECT_EQ(back, d);
  EXPECT_EQ(back.instances[0].contexts[1].score, 1.0 / 3.0);
}

TEST(Dataset, VocabInferredWhenAbsent) {
  Dataset d;
  d.instances.push_back(small());
  d.vocab_size = 7;
  save_dataset(d, tmp("infer.jsonl"));
  EXPECT_EQ(load_dataset(tmp("infer.jsonl")).vocab_size, 7);
}

TEST(Dataset, GoldRankOutsideContextsIsValidationError) {
  Instance i = small();
  i.gold_ranks = {7};
  write(tmp("bad.jsonl"), encode_record(i) + "\n");
  try {
    load_dataset(tmp("bad.jsonl"), 10);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.instance_id(), "x");
  }
}

TEST(Dataset, MalformedLineNamesLineNumber) {
  Instance i = small();
  write(tmp("malformed.jsonl"), encode_record(i) + "\n{\"id\": \n");
  try {
    load_dataset(tmp("malformed.jsonl"), 10);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Validate, WellFormedIsOk) { EXPECT_TRUE(validate_instance(small(), 10).empty()); }

TEST(Validate, TokenOutOfRange) {
  Instance i = small();
  i.answer = make_tokens({12});
  const auto v = validate_instance(i, 10);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "token range");
}

TEST(Validate, IdkWithGoldRanks) {
  Instance i = small();
  i.scenario = Scenario::multi_needle_idk;
  EXPECT_EQ(validate_instance(i, 10).size(), 1u);
}

TEST(Validate, ReportsEveryViolation) {
  Instance i = small();
  i.answer = {};
  i.question = make_tokens({99});
  i.gold_ranks = {0};
  EXPECT_EQ(validate_instance(i, 10).size(), 3u);
}

TEST(ContextSequence, RetrieverOrderMustDescend) {
  EXPECT_THROW(ContextSequence::from_retriever({Context{make_tokens({1}), 0.1}, Context{make_tokens({2}), 0.5}}),
               std::invalid_argument);
  EXPECT_THROW(ContextSequence(std::vector<Context>{}), std::invalid_argument);
}
