// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

namespace oracle {

OracleReport compare(std::string quantity, double reference, double implementation, double tolerance, bool relative) {
  OracleReport r{std::move(quantity), reference, implementation, tolerance, relative, false};
  const double diff = std::fabs(reference - implementation);
  const double scale = relative ? std::max(std::fabs(reference), 1e-300) : 1.0;
  r.pass = diff / scale <= tolerance;
  return r;
}

namespace {

struct Kahan {
  long double sum = 0.0L, c = 0.0L;
  void add(long double x) {
    const long double y = x - c;
    const long double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("oracle::jsd: size mismatch");
  Kahan kl_p, kl_q;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double a = p[i], b = q[i];
    const long double m = (a + b) / 2.0L;
    if (a > 0.0L) kl_p.add(a * std::log(a / m));
    if (b > 0.0L) kl_q.add(b * std::log(b / m));
  }
  return static_cast<double>(kl_p.sum / 2.0L + kl_q.sum / 2.0L);
}

double chi_square_uniform_pvalue(const std::vector<std::size_t>& counts) {
  if (counts.size() < 2) throw std::invalid_argument("need at least two cells");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

double permutation_uniformity_pvalue(int n, int trials, const std::function<std::vector<int>(int)>& sampler) {
  if (n < 2 || n > 6) throw std::invalid_argument("n must lie in [2, 6]");
  std::map<std::vector<int>, std::size_t> index;
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    index.emplace(perm, index.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<std::size_t> counts(index.size(), 0);
  for (int t = 0; t < trials; ++t) {
    const auto it = index.find(sampler(t));
    if (it == index.end()) throw std::runtime_error("sampler returned a non-permutation");
    ++counts[it->second];
  }
  return chi_square_uniform_pvalue(counts);
}

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("size mismatch");
  double scale = floor, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::fabs(a[i]), std::fabs(b[i])});
    diff = std::max(diff, std::fabs(a[i] - b[i]));
  }
  return diff / scale;
}

double score_aware_alpha(const std::vector<double>& scores) {
  const std::size_t n = scores.size();
  std::vector<std::pair<double, std::size_t>> gaps;
  for (std::size_t i = 0; i + 1 < n; ++i) gaps.emplace_back(scores[i] - scores[i + 1], i + 1);
  std::stable_sort(gaps.begin(), gaps.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  return 1.0 - static_cast<double>(gaps.front().second) / static_cast<double>(n);
}

int tail_size(int n, double alpha) {
  const long double target = static_cast<long double>(alpha) * n;
  int best = 0;
  for (int m = 1; m <= n; ++m) {
    const long double d = std::fabs(target - m), db = std::fabs(target - best);
    if (d < db || d == db) best = m;  // ties resolve upward
  }
  return best;
}

bool within_binomial(std::size_t hits, std::size_t n, double p, double k) {
  const double mean = static_cast<double>(n) * p;
  const double sd = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
  return std::fabs(static_cast<double>(hits) - mean) <= k * sd;
}

}  // namespace oracle
