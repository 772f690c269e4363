// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference computations for the test suite. Nothing here calls
// into cordlab; inputs and outputs are plain standard containers.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace oracle {

struct OracleReport {
  std::string quantity;
  double reference = 0.0;
  double implementation = 0.0;
  double tolerance = 0.0;
  bool relative = false;
  bool pass = false;
};

/// Absolute or relative agreement check.
OracleReport compare(std::string quantity, double reference, double implementation, double tolerance,
                     bool relative = false);

/// JSD in nats by direct per-element KL sums in long double with Kahan
/// compensation.
double jsd(const std::vector<double>& p, const std::vector<double>& q);

/// Chi-square goodness-of-fit p-value of observed counts against equal
/// expected counts.
double chi_square_uniform_pvalue(const std::vector<std::size_t>& counts);

/// Draws `trials` permutations of {0..n-1} from `sampler(trial)` and returns
/// the uniformity p-value over all n! outcomes. n <= 6.
double permutation_uniformity_pvalue(int n, int trials, const std::function<std::vector<int>(int)>& sampler);

/// Central finite-difference gradient of f at x.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                double step = 1e-5);

/// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor).
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8);

/// 1 - i/n with i the smallest 1-based index among the largest adjacent gaps.
double score_aware_alpha(const std::vector<double>& scores);

/// Nearest integer to alpha * n by linear search in long double, halves upward.
int tail_size(int n, double alpha);

/// True when `hits` lies within k standard deviations of n*p.
bool within_binomial(std::size_t hits, std::size_t n, double p, double k = 3.0);

}  // namespace oracle
