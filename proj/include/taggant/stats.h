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

#ifndef TAGGANT_STATS_H_
#define TAGGANT_STATS_H_

#include <cstdint>
#include <span>

namespace taggant::stats {

// log C(n, r).
double LogChoose(std::int64_t n, std::int64_t r);

// log P(Z = z) for Z ~ Binomial(n, q).
double BinomialLogPmf(std::int64_t z, std::int64_t n, double q);

// Natural log of P(Z >= hits) for Z ~ Binomial(K, q), summed in log space.
// hits == 0 gives exactly 0.
double BinomialLogUpperTail(std::int64_t hits, std::int64_t K, double q);

// Top-k detection p-value with q = k / classes. Requires 0 <= hits <= K and
// 1 <= k < classes.
double BinomialPValue(std::int64_t hits, std::int64_t K, int k, int classes);
double BinomialLog10PValue(std::int64_t hits, std::int64_t K, int k, int classes);

// log Q(a, x), the regularized upper incomplete gamma, for a > 0 and x >= 0.
// Series for x < a + 1, Lentz continued fraction otherwise.
double LogUpperIncompleteGamma(double a, double x);

// log10 of P(chi2_dof >= statistic).
double ChiSquareLog10UpperTail(double statistic, double dof);

// Fisher's method. Inputs are log10 p-values (each <= 0); returns the log10 of
// the combined p-value. A single input is returned unchanged.
double FisherCombineLog10(std::span<const double> log10_p);

}  // namespace taggant::stats

#endif  // TAGGANT_STATS_H_
