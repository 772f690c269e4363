// SPDX-License-Identifier: Apache-2.0
#include "cordlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cordlab/perturbation.hpp"
#include "cordlab/rng.hpp"

namespace cordlab {

namespace {

constexpr std::uint64_t kOrderStream = 0x6f72646572ULL;  // "order"

}  // namespace

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::none: return "none";
    case TrainMode::nll_given: return "nll_given";
    case TrainMode::nll_aug: return "nll_aug";
    case TrainMode::consistency_random: return "consistency_random";
    case TrainMode::cord: return "cord";
    case TrainMode::in2: return "in2";
  }
  return "?";
}

TrainMode train_mode_from_string(std::string_view s) {
  for (auto m : {TrainMode::none, TrainMode::nll_given, TrainMode::nll_aug, TrainMode::consistency_random,
                 TrainMode::cord, TrainMode::in2}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown train mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda", "must be finite and >= 0");
  if (alpha_policy.kind == AlphaPolicy::Kind::fixed && !(alpha_policy.alpha >= 0.0 && alpha_policy.alpha <= 1.0)) {
    throw ConfigError("alpha", "must lie in [0, 1]");
  }
  if (consistency_mode.variant == ConsistencyMode::Variant::first_k && consistency_mode.k < 1) {
    throw ConfigError("consistency_k", "must be >= 1");
  }
  if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps", "must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamOptions& o) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * g;
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= o.learning_rate * (mhat / (std::sqrt(vhat) + o.eps) + o.weight_decay * params[i]);
  }
}

std::uint64_t perturbation_seed(std::uint64_t train_seed, int epoch, std::size_t instance_index) {
  // Low bit cleared so that seed ^ 1 (the full-shuffle stream) never collides with another instance.
  return derive_seed(train_seed, static_cast<std::uint64_t>(epoch) + 1, instance_index) & ~1ULL;
}

PairResult make_pair(const Instance& inst, const TrainConfig& tc, const ModelParams& scoring, std::uint64_t seed) {
  PairResult r;
  switch (tc.mode) {
    case TrainMode::none:
      break;
    case TrainMode::nll_given:
      r.branches.push_back({inst.contexts, false});
      break;
    case TrainMode::in2:
      r.branches.push_back({full_shuffle(inst.contexts, seed ^ 1ULL), false});
      break;
    case TrainMode::nll_aug:
      r.branches.push_back({inst.contexts, false});
      r.branches.push_back({full_shuffle(inst.contexts, seed ^ 1ULL), false});
      break;
    case TrainMode::consistency_random:
      r.branches.push_back({inst.contexts, true});
      r.branches.push_back({full_shuffle(inst.contexts, seed ^ 1ULL), true});
      break;
    case TrainMode::cord: {
      const double alpha = resolve_alpha(inst, tc.alpha_policy);
      TeacherSelection sel = select_teacher_traced(scoring, inst, alpha, seed, tc.teacher_override);
      r.branches.push_back({inst.contexts, true});
      r.branches.push_back({sel.choice.ordering, true});
      r.choice = std::move(sel.choice);
      r.teacher_forward = std::move(sel.teacher_forward);
      break;
    }
  }
  return r;
}

InstanceLoss instance_loss(const ModelParams& params, const Instance& inst, const PairResult& pair,
                           const TrainConfig& tc) {
  InstanceLoss out;
  out.grad.assign(params.size(), 0.0);
  const auto [loss, clamps] = instance_loss_into(params, inst, pair, tc, out.grad);
  out.loss = loss;
  out.floor_clamps = clamps;
  return out;
}

std::pair<LossBreakdown, std::size_t> instance_loss_into(const ModelParams& params, const Instance& inst,
                                                         const PairResult& pair, const TrainConfig& tc,
                                                         std::span<double> grad) {
  if (pair.branches.empty()) throw std::invalid_argument("instance_loss: no branches");
  const TokenSeq target = with_terminator(inst.answer, params.config);
  struct {
    LossBreakdown loss;
    std::size_t floor_clamps = 0;
  } out;

  ForwardResult f0 = forward(params, inst.question, pair.branches[0].ordering, target);
  NllResult n0 = nll_loss(f0.dists, target);
  out.floor_clamps += n0.floor_clamps;

  if (pair.branches.size() == 1) {
    out.loss = combined_loss(n0.value, n0.value, 0.0, tc.lambda);
    backward_accumulate(params, f0.trace, n0.grad, grad);
    return {out.loss, out.floor_clamps};
  }

  ForwardResult f1 = pair.teacher_forward ? *pair.teacher_forward
                                          : forward(params, inst.question, pair.branches[1].ordering, target);
  NllResult n1 = nll_loss(f1.dists, target);
  out.floor_clamps += n1.floor_clamps;

  DistGrads d0(n0.grad.size()), d1(n1.grad.size());
  for (std::size_t t = 0; t < d0.size(); ++t) {
    d0[t].resize(n0.grad[t].size());
    d1[t].resize(n1.grad[t].size());
    for (std::size_t v = 0; v < d0[t].size(); ++v) {
      d0[t][v] = 0.5 * n0.grad[t][v];
      d1[t][v] = 0.5 * n1.grad[t][v];
    }
  }
  double cons = 0.0;
  const bool with_cons = pair.branches[0].consistency && pair.branches[1].consistency;
  if (with_cons) {
    ConsistencyResult c = consistency_loss(f0.dists, f1.dists, tc.consistency_mode);
    cons = c.value;
    for (std::size_t t = 0; t < d0.size(); ++t) {
      for (std::size_t v = 0; v < d0[t].size(); ++v) {
        d0[t][v] += tc.lambda * c.grad_a[t][v];
        if (!tc.stop_gradient_teacher) d1[t][v] += tc.lambda * c.grad_b[t][v];
      }
    }
  }
  out.loss = combined_loss(n0.value, n1.value, cons, tc.lambda);
  backward_accumulate(params, f0.trace, d0, grad);
  backward_accumulate(params, f1.trace, d1, grad);
  return {out.loss, out.floor_clamps};
}

TrainResult train(const TrainConfig& tc, const Dataset& data, const ModelParams& init, const EpochCallback& on_epoch) {
  tc.validate();
  TrainResult res{init, {}};
  if (tc.mode == TrainMode::none) return res;

  ModelParams& params = res.params;
  const ModelParams frozen = init;
  const bool frozen_scoring = tc.teacher_scoring == TeacherScoring::frozen_initial;
  AdamState adam(params.size());
  const std::size_t N = data.instances.size();
  const std::size_t B = static_cast<std::size_t>(tc.batch_size);
  const std::size_t steps_per_epoch = (N + B - 1) / B;
  const double total_steps = static_cast<double>(steps_per_epoch) * tc.epochs;

  std::vector<std::size_t> order(N);
  std::vector<double> grad(params.size());
  int step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(tc.seed, kOrderStream, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());

    for (std::size_t b0 = 0; b0 < N; b0 += B) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(N, b0 + B)));
      std::sort(batch.begin(), batch.end());

      std::fill(grad.begin(), grad.end(), 0.0);
      double s_given = 0.0, s_teacher = 0.0, s_cons = 0.0;
      for (std::size_t i : batch) {
        const Instance& inst = data.instances[i];
        const std::uint64_t seed = perturbation_seed(tc.seed, epoch, i);
        PairResult pair = make_pair(inst, tc, frozen_scoring ? frozen : params, seed);
        if (frozen_scoring) pair.teacher_forward.reset();
        if (pair.choice) {
          res.log.selections.push_back({epoch, inst.id, pair.choice->which, pair.choice->alpha_used,
                                        pair.choice->logprob_interp, pair.choice->logprob_full});
        }
        const auto [loss, clamps] = instance_loss_into(params, inst, pair, tc, grad);
        s_given += loss.nll_given;
        s_teacher += loss.nll_teacher;
        s_cons += loss.consistency;
        res.log.floor_clamps += clamps;
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (double& g : grad) g *= inv;
      LossBreakdown lb = combined_loss(s_given * inv, s_teacher * inv, s_cons * inv, tc.lambda);
      if (!std::isfinite(lb.combined)) {
        throw std::runtime_error("non-finite loss at optimizer step " + std::to_string(step));
      }
      res.log.steps.push_back({step, epoch, lb});

      AdamOptions ao{tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_eps, tc.weight_decay};
      if (tc.linear_decay) ao.learning_rate *= 1.0 - static_cast<double>(step) / total_steps;
      adam_step(params.values, grad, adam, ao);
      ++step;
    }
    if (on_epoch) res.log.snapshots.push_back({epoch, on_epoch(epoch, params)});
  }
  return res;
}

void write_train_log(const TrainLog& log, TrainMode mode, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write train log " + path.string());
  out << "step,mode,nll_given,nll_teacher,consistency,combined\n";
  for (const auto& s : log.steps) {
    out << s.step << ',' << to_string(mode) << ',' << format_real(s.loss.nll_given) << ','
        << format_real(s.loss.nll_teacher) << ',' << format_real(s.loss.consistency) << ','
        << format_real(s.loss.combined) << '\n';
  }
}

}  // namespace cordlab
