// SPDX-License-Identifier: Apache-2.0
//
// Small models and hand-built instances shared by the test binaries.
#pragma once

#include <functional>
#include <vector>

#include "cordlab/losses.hpp"
#include "cordlab/model.hpp"
#include "cordlab/taskgen.hpp"
#include "cordlab/trainer.hpp"

namespace fixtures {

inline cordlab::VocabLayout micro_vocab() { return {4, 4, 2}; }

/// 1-layer, d_model 8 model used by the gradient checks.
inline cordlab::ModelConfig micro_config(int n_layers = 1) {
  return cordlab::model_config_for(micro_vocab(), 8, n_layers, 2, 32);
}

inline cordlab::ModelParams micro_params(std::uint64_t seed = 3, int n_layers = 1) {
  return cordlab::init_params(micro_config(n_layers), seed, cordlab::InitOptions{0.3, 0.3});
}

/// Rank-prior instance over the micro vocabulary with n contexts.
inline cordlab::Instance micro_instance(int n = 4, std::uint64_t seed = 9) {
  cordlab::GenConfig g;
  g.vocab = micro_vocab();
  g.n_contexts = n;
  g.n_instances = 1;
  g.gold = cordlab::GoldRankDistribution::uniform();
  g.scores = cordlab::ScoreModel::informative(0.5, 0.01);
  g.seed = seed;
  return cordlab::gen_rank_prior_dataset(g).instances.front();
}

/// Multi-needle instance (answer length 2) over the micro vocabulary.
inline cordlab::Instance micro_mn_instance(int n = 4, std::uint64_t seed = 9) {
  cordlab::GenConfig g;
  g.vocab = micro_vocab();
  g.n_contexts = n;
  g.n_instances = 1;
  g.needles = 2;
  g.seed = seed;
  return cordlab::gen_multi_needle_dataset(g).instances.front();
}

inline cordlab::ModelParams with_values(const cordlab::ModelParams& p, const std::vector<double>& x) {
  return cordlab::ModelParams{p.config, x};
}

/// Analytic gradient of the consistency loss between two orderings.
inline std::vector<double> consistency_grad(const cordlab::ModelParams& p, const cordlab::Instance& inst,
                                            const cordlab::ContextSequence& other, const cordlab::ConsistencyMode& mode) {
  const auto target = cordlab::with_terminator(inst.answer, p.config);
  const auto fa = cordlab::forward(p, inst.question, inst.contexts, target);
  const auto fb = cordlab::forward(p, inst.question, other, target);
  const auto c = cordlab::consistency_loss(fa.dists, fb.dists, mode);
  std::vector<double> g(p.size(), 0.0);
  cordlab::backward_accumulate(p, fa.trace, c.grad_a, g);
  cordlab::backward_accumulate(p, fb.trace, c.grad_b, g);
  return g;
}

inline double consistency_value(const cordlab::ModelParams& p, const cordlab::Instance& inst,
                                const cordlab::ContextSequence& other, const cordlab::ConsistencyMode& mode) {
  const auto target = cordlab::with_terminator(inst.answer, p.config);
  const auto fa = cordlab::forward(p, inst.question, inst.contexts, target);
  const auto fb = cordlab::forward(p, inst.question, other, target);
  return cordlab::consistency_loss(fa.dists, fb.dists, mode).value;
}

/// Combined objective of `tc` for a fixed pair, as a function of the parameters.
inline std::function<double(const std::vector<double>&)> objective(const cordlab::ModelParams& p,
                                                                   const cordlab::Instance& inst,
                                                                   cordlab::PairResult pair,
                                                                   const cordlab::TrainConfig& tc) {
  pair.teacher_forward.reset();
  return [p, inst, pair, tc](const std::vector<double>& x) {
    return cordlab::instance_loss(with_values(p, x), inst, pair, tc).loss.combined;
  };
}

}  // namespace fixtures
