// SPDX-License-Identifier: Apache-2.0
//
// Training objective: answer NLL, per-step Jensen-Shannon consistency between
// two orderings, and their combination. Every loss also returns its exact
// gradient with respect to the input probability vectors.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cordlab/model.hpp"

namespace cordlab {

struct ConsistencyMode {
  enum class Variant { all_steps, first_k };
  Variant variant = Variant::all_steps;
  int k = 1;

  static ConsistencyMode all_steps() { return {}; }
  static ConsistencyMode first_k(int k);
};

using DistGrads = std::vector<std::vector<double>>;

struct NllResult {
  double value = 0.0;
  DistGrads grad;               // d value / d probs, per step
  std::size_t floor_clamps = 0;  // gold probabilities that hit kProbFloor
};

/// -sum_t log dists[t][answer_t]
NllResult nll_loss(std::span<const TokenDistribution> dists, const TokenSeq& answer);

struct JsdResult {
  double value = 0.0;
  std::vector<double> grad_p;
  std::vector<double> grad_q;
};

/// JSD(P||Q) = KL(P||M)/2 + KL(Q||M)/2 with M = (P+Q)/2, in nats.
/// Symmetric bit-for-bit in its arguments.
JsdResult jsd(const TokenDistribution& p, const TokenDistribution& q);
double jsd_value(const TokenDistribution& p, const TokenDistribution& q);

struct ConsistencyResult {
  double value = 0.0;
  DistGrads grad_a;
  DistGrads grad_b;
};

ConsistencyResult consistency_loss(std::span<const TokenDistribution> a, std::span<const TokenDistribution> b,
                                   const ConsistencyMode& mode);

struct LossBreakdown {
  double nll_given = 0.0;
  double nll_teacher = 0.0;
  double consistency = 0.0;
  double combined = 0.0;
  double lambda = 0.0;
};

/// combined = (nll_given + nll_teacher)/2 + lambda * consistency
LossBreakdown combined_loss(double nll_given, double nll_teacher, double consistency, double lambda);

}  // namespace cordlab
