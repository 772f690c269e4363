// SPDX-License-Identifier: Apache-2.0
#include "cordlab/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cordlab/rng.hpp"

namespace cordlab {

ContextSequence full_shuffle(const ContextSequence& c, std::uint64_t seed) {
  std::vector<Context> out = c.contexts();
  Rng rng(seed);
  rng.shuffle(out.begin(), out.end());
  return ContextSequence(std::move(out));
}

int tail_size(int n, double alpha) {
  if (n < 1) throw std::invalid_argument("tail_size: n must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("tail_size: alpha outside [0, 1]");
  const double x = static_cast<double>(n);
  int m = static_cast<int>(std::floor(alpha * x + 0.5));
  // The rounded product can land on a half; fma gives the exact sign of alpha*n - (m -/+ 0.5).
  if (std::fma(alpha, x, -(m - 0.5)) < 0.0) --m;
  else if (std::fma(alpha, x, -(m + 0.5)) >= 0.0) ++m;
  return std::clamp(m, 0, n);
}

ContextSequence interpolate_perturb(const ContextSequence& c, const PerturbationSpec& spec) {
  const int n = static_cast<int>(c.size());
  const int m = tail_size(n, spec.alpha);
  std::vector<Context> out = c.contexts();
  if (m > 1) {
    Rng rng(spec.seed);
    rng.shuffle(out.begin() + (n - m), out.end());
  }
  return ContextSequence(std::move(out));
}

double score_aware_alpha(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n < 2) throw std::invalid_argument("score_aware_alpha: need at least two scores");
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!(scores[i] > scores[i + 1])) {
      throw std::invalid_argument("score_aware_alpha: scores must be strictly descending");
    }
  }
  std::size_t best = 0;
  double best_gap = scores[0] - scores[1];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double gap = scores[i] - scores[i + 1];
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return 1.0 - static_cast<double>(best + 1) / static_cast<double>(n);
}

}  // namespace cordlab
