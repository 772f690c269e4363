// SPDX-License-Identifier: Apache-2.0
//
// Context-ordering perturbations: the full shuffle c', the noise-controlled
// interpolation c'_alpha, and score-aware choice of alpha.
#pragma once

#include <cstdint>
#include <span>

#include "cordlab/data_model.hpp"

namespace cordlab {

struct PerturbationSpec {
  double alpha = 0.5;  // fraction of the ranking (from the bottom) exposed to shuffling
  std::uint64_t seed = 0;
};

/// Uniform random permutation of all contexts.
ContextSequence full_shuffle(const ContextSequence& c, std::uint64_t seed);

/// Number of bottom-ranked slots shuffled for noise degree alpha:
/// round(alpha * n), halves rounded up, clamped to [0, n].
int tail_size(int n, double alpha);

/// Keeps the first n - tail_size(n, alpha) contexts in place and permutes the
/// remaining ones uniformly among the tail slots.
ContextSequence interpolate_perturb(const ContextSequence& c, const PerturbationSpec& spec);

/// alpha = 1 - i/n where i is the first (1-based) position of the largest
/// adjacent score drop s_i - s_{i+1}. Scores must be strictly descending, n >= 2.
double score_aware_alpha(std::span<const double> scores);

}  // namespace cordlab
