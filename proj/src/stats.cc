// Copyright 2026 The Taggant Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "taggant/stats.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "taggant/error.h"

namespace taggant::stats {

namespace {

constexpr double kLn10 = 2.30258509299404568402;

// Exact for n <= 1029 up to double rounding of the running product.
double ChooseDouble(std::int64_t n, std::int64_t r) {
  r = std::min(r, n - r);
  double c = 1.0;
  for (std::int64_t i = 1; i <= r; ++i) {
    c = c * static_cast<double>(n - r + i) / static_cast<double>(i);
  }
  return c;
}

double LogSumExp(const std::vector<double>& terms) {
  const double m = *std::max_element(terms.begin(), terms.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

}  // namespace

double LogChoose(std::int64_t n, std::int64_t r) {
  if (r < 0 || r > n) return -std::numeric_limits<double>::infinity();
  if (n <= 1000) return std::log(ChooseDouble(n, r));
  return std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0);
}

double BinomialLogPmf(std::int64_t z, std::int64_t n, double q) {
  if (z < 0 || z > n) return -std::numeric_limits<double>::infinity();
  double lp = LogChoose(n, z);
  if (z > 0) lp += static_cast<double>(z) * std::log(q);
  if (n - z > 0) lp += static_cast<double>(n - z) * std::log1p(-q);
  return lp;
}

double BinomialLogUpperTail(std::int64_t hits, std::int64_t K, double q) {
  if (K < 0 || hits < 0 || hits > K) {
    throw ConfigError("binomial tail needs 0 <= hits <= K, got hits=" + std::to_string(hits) +
                      " K=" + std::to_string(K));
  }
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("binomial success rate must lie in (0,1)");
  if (hits == 0) return 0.0;
  std::vector<double> terms;
  for (std::int64_t z = hits; z <= K; ++z) terms.push_back(BinomialLogPmf(z, K, q));
  return std::min(0.0, LogSumExp(terms));
}

namespace {
double RateOf(int k, int classes) {
  if (classes < 2 || k < 1 || k >= classes) {
    throw ConfigError("p-value needs 1 <= k < |Y|, got k=" + std::to_string(k) +
                      " |Y|=" + std::to_string(classes));
  }
  return static_cast<double>(k) / static_cast<double>(classes);
}
}  // namespace

double BinomialPValue(std::int64_t hits, std::int64_t K, int k, int classes) {
  return std::exp(BinomialLogUpperTail(hits, K, RateOf(k, classes)));
}

double BinomialLog10PValue(std::int64_t hits, std::int64_t K, int k, int classes) {
  return BinomialLogUpperTail(hits, K, RateOf(k, classes)) / kLn10;
}

double LogUpperIncompleteGamma(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw ConfigError("incomplete gamma needs a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 100000;
  if (x < a + 1.0) {
    // P(a,x) = prefix * sum_n x^n / (a (a+1) ... (a+n)); Q = 1 - P.
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < kMaxIter; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    const double p = std::exp(log_prefix + std::log(sum));
    return std::log1p(-std::min(p, 1.0));
  }
  // Modified Lentz for Q(a,x) = prefix / (x + 1 - a - 1(1-a)/(x + 3 - a - ...)).
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return log_prefix + std::log(h);
}

double ChiSquareLog10UpperTail(double statistic, double dof) {
  if (!(dof > 0.0)) throw ConfigError("chi-square needs positive degrees of freedom");
  return LogUpperIncompleteGamma(0.5 * dof, std::max(0.0, 0.5 * statistic)) / kLn10;
}

double FisherCombineLog10(std::span<const double> log10_p) {
  if (log10_p.empty()) throw ConfigError("Fisher combination of an empty p-value list");
  for (double lp : log10_p) {
    if (!(lp <= 0.0) || std::isinf(lp)) {
      throw ConfigError("Fisher combination needs p-values in (0,1]");
    }
  }
  if (log10_p.size() == 1) return log10_p[0];
  // X = -2 sum ln p_i ~ chi2 with 2m dof; its tail is Q(m, X/2).
  double half_statistic = 0.0;
  for (double lp : log10_p) half_statistic -= lp * kLn10;
  const double m = static_cast<double>(log10_p.size());
  return std::min(0.0, LogUpperIncompleteGamma(m, half_statistic) / kLn10);
}

}  // namespace taggant::stats
