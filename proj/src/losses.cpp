// SPDX-License-Identifier: Apache-2.0
#include "cordlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cordlab {

namespace {

// x log(x/m), with 0 log 0 = 0.
double xlogx_over(double x, double m) {
  if (x <= 0.0) return 0.0;
  return x * std::log(x / std::max(m, kProbFloor));
}

}  // namespace

ConsistencyMode ConsistencyMode::first_k(int k) {
  if (k < 1) throw std::invalid_argument("first_k requires k >= 1");
  return {Variant::first_k, k};
}

NllResult nll_loss(std::span<const TokenDistribution> dists, const TokenSeq& answer) {
  if (dists.size() != answer.size()) throw std::invalid_argument("nll_loss: length mismatch");
  NllResult r;
  r.grad.resize(dists.size());
  for (std::size_t t = 0; t < dists.size(); ++t) {
    const auto& pr = dists[t].probs;
    const auto gold = static_cast<std::size_t>(answer[t].id);
    if (gold >= pr.size()) throw std::out_of_range("nll_loss: answer token outside vocabulary");
    r.grad[t].assign(pr.size(), 0.0);
    const double pg = pr[gold];
    if (pg < kProbFloor) {
      ++r.floor_clamps;
      r.value -= std::log(kProbFloor);
    } else {
      r.value -= std::log(pg);
      r.grad[t][gold] = -1.0 / pg;
    }
  }
  return r;
}

double jsd_value(const TokenDistribution& p, const TokenDistribution& q) {
  const auto& a = p.probs;
  const auto& b = q.probs;
  if (a.size() != b.size()) throw std::invalid_argument("jsd: distributions differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double m = 0.5 * (a[i] + b[i]);
    s += xlogx_over(a[i], m) + xlogx_over(b[i], m);
  }
  return 0.5 * s;
}

JsdResult jsd(const TokenDistribution& p, const TokenDistribution& q) {
  const auto& a = p.probs;
  const auto& b = q.probs;
  JsdResult r;
  r.value = jsd_value(p, q);
  r.grad_p.resize(a.size());
  r.grad_q.resize(a.size());
  // dJSD/dp_i = log(p_i / m_i) / 2 (the +1/2 and -1/2 terms from M cancel).
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double m = std::max(0.5 * (a[i] + b[i]), kProbFloor);
    r.grad_p[i] = 0.5 * std::log(std::max(a[i], kProbFloor) / m);
    r.grad_q[i] = 0.5 * std::log(std::max(b[i], kProbFloor) / m);
  }
  return r;
}

ConsistencyResult consistency_loss(std::span<const TokenDistribution> a, std::span<const TokenDistribution> b,
                                   const ConsistencyMode& mode) {
  if (a.size() != b.size()) throw std::invalid_argument("consistency_loss: sequences differ in length");
  std::size_t steps = a.size();
  if (mode.variant == ConsistencyMode::Variant::first_k) {
    if (mode.k < 1 || static_cast<std::size_t>(mode.k) > a.size()) {
      throw std::invalid_argument("consistency_loss: first_k requires 1 <= k <= length");
    }
    steps = static_cast<std::size_t>(mode.k);
  }
  ConsistencyResult r;
  r.grad_a.resize(a.size());
  r.grad_b.resize(b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (t < steps) {
      auto j = jsd(a[t], b[t]);
      r.value += j.value;
      r.grad_a[t] = std::move(j.grad_p);
      r.grad_b[t] = std::move(j.grad_q);
    } else {
      r.grad_a[t].assign(a[t].probs.size(), 0.0);
      r.grad_b[t].assign(b[t].probs.size(), 0.0);
    }
  }
  return r;
}

LossBreakdown combined_loss(double nll_given, double nll_teacher, double consistency, double lambda) {
  LossBreakdown b;
  b.nll_given = nll_given;
  b.nll_teacher = nll_teacher;
  b.consistency = consistency;
  b.lambda = lambda;
  b.combined = 0.5 * (nll_given + nll_teacher) + lambda * consistency;
  return b;
}

}  // namespace cordlab
