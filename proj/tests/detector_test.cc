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

#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "taggant/detector.h"
#include "taggant/endpoint.h"
#include "taggant/error.h"
#include "taggant/signer.h"
#include "taggant/stats.h"
#include "taggant/trainer.h"

namespace taggant {
namespace {

// Direct summation of the binomial upper tail in extended precision.
long double NaiveTail(int hits, int K, long double q) {
  long double total = 0.0L, choose = 1.0L;
  for (int z = 0; z <= K; ++z) {
    if (z > 0) choose = choose * (K - z + 1) / z;
    if (z >= hits) total += choose * std::pow(q, z) * std::pow(1.0L - q, K - z);
  }
  return total;
}

// Chi-square upper tail for even dof 2m in closed form, as log10.
double ChiSquareEvenTailLog10(double x, int m) {
  long double term = 1.0L, sum = 1.0L;
  for (int i = 1; i < m; ++i) {
    term *= x / 2.0L / i;
    sum += term;
  }
  return static_cast<double>((-x / 2.0L + std::log(sum)) / std::log(10.0L));
}

TEST(Binomial, MatchesDirectSummation) {
  for (int K : {1, 5, 10, 20, 40, 64}) {
    for (auto [k, Y] : {std::pair{1, 10}, {3, 10}, {1, 1000}, {10, 1000}, {5, 6}}) {
      for (int h = 0; h <= K; ++h) {
        const long double oracle = NaiveTail(h, K, static_cast<long double>(k) / Y);
        const double p = stats::BinomialPValue(h, K, k, Y);
        ASSERT_LE(std::abs((p - oracle) / oracle), 1e-12) << K << " " << k << " " << Y << " " << h;
      }
    }
  }
}

TEST(Binomial, ReferenceValues) {
  EXPECT_EQ(stats::BinomialPValue(0, 10, 3, 10), 1.0);
  EXPECT_NEAR(stats::BinomialPValue(10, 10, 10, 1000) / 1e-20, 1.0, 1e-12);
  EXPECT_NEAR(stats::BinomialPValue(1, 10, 1, 1000), 1.0 - std::pow(0.999, 10), 1e-15);
  EXPECT_NEAR(stats::BinomialPValue(1, 10, 1, 1000), 9.9552e-3, 1e-6);
  EXPECT_NEAR(stats::BinomialLog10PValue(10, 10, 10, 1000), -20.0, 1e-12);
}

TEST(Binomial, MonotoneInHits) {
  for (int h = 1; h <= 30; ++h) {
    EXPECT_LE(stats::BinomialPValue(h, 30, 3, 20), stats::BinomialPValue(h - 1, 30, 3, 20));
  }
}

TEST(Binomial, ParameterViolations) {
  EXPECT_THROW(stats::BinomialPValue(11, 10, 1, 10), ConfigError);
  EXPECT_THROW(stats::BinomialPValue(-1, 10, 1, 10), ConfigError);
  EXPECT_THROW(stats::BinomialPValue(1, 10, 10, 10), ConfigError);
  EXPECT_THROW(stats::BinomialPValue(1, 10, 0, 10), ConfigError);
}

TEST(Fisher, SingleInputIsIdentity) {
  for (double lp : {0.0, -0.3, -5.0, -250.0}) {
    const std::vector<double> one = {lp};
    EXPECT_EQ(stats::FisherCombineLog10(one), lp);
  }
}

TEST(Fisher, FourStrongRuns) {
  const std::vector<double> runs(4, -20.0);
  const double got = stats::FisherCombineLog10(runs);
  EXPECT_NEAR(got, -74.0, 0.1);
  EXPECT_NEAR(got, ChiSquareEvenTailLog10(-2.0 * 4 * -20.0 * std::log(10.0), 4), 1e-9);
}

TEST(Fisher, FourWeakRuns) {
  const double lp = std::log10(1.0 - std::pow(0.999, 10));
  const std::vector<double> runs(4, lp);
  const double got = stats::FisherCombineLog10(runs);
  EXPECT_NEAR(got, -4.9, 0.1);
  EXPECT_NEAR(got, ChiSquareEvenTailLog10(-2.0 * 4 * lp * std::log(10.0), 4), 1e-9);
}

TEST(Fisher, HandlesTinyPValues) {
  const std::vector<double> runs(4, -300.0);
  const double got = stats::FisherCombineLog10(runs);
  EXPECT_TRUE(std::isfinite(got));
  EXPECT_NEAR(got, ChiSquareEvenTailLog10(-2.0 * 4 * -300.0 * std::log(10.0), 4), 1e-6);
}

TEST(Fisher, MatchesClosedFormOnAGrid) {
  for (int m = 2; m <= 6; ++m) {
    for (double lp : {-0.01, -0.5, -2.0, -10.0, -60.0}) {
      std::vector<double> runs(m, lp);
      runs[0] = lp * 0.5;
      double x = 0.0;
      for (double r : runs) x += -2.0 * r * std::log(10.0);
      EXPECT_NEAR(stats::FisherCombineLog10(runs), ChiSquareEvenTailLog10(x, m),
                  1e-9 * std::max(1.0, std::abs(ChiSquareEvenTailLog10(x, m))));
    }
  }
}

TEST(Fisher, PermutationInvariantAndMonotone) {
  std::vector<double> runs = {-0.5, -3.0, -1.25, -7.0};
  const double base = stats::FisherCombineLog10(runs);
  std::sort(runs.begin(), runs.end());
  do {
    EXPECT_NEAR(stats::FisherCombineLog10(runs), base, 1e-12);
  } while (std::next_permutation(runs.begin(), runs.end()));
  runs[2] -= 1.0;
  EXPECT_LE(stats::FisherCombineLog10(runs), base);
}

TEST(Fisher, InvalidInputs) {
  EXPECT_THROW(stats::FisherCombineLog10(std::vector<double>{}), ConfigError);
  EXPECT_THROW(stats::FisherCombineLog10(std::vector<double>{0.1}), ConfigError);
}

// Returns a fixed list and counts queries.
class ScriptedEndpoint : public SuspectEndpoint {
 public:
  explicit ScriptedEndpoint(std::vector<int> labels) : labels_(std::move(labels)) {}
  std::vector<int> TopK(const std::vector<double>&, const ImageShape&, int) override {
    ++queries;
    return labels_;
  }
  int k_limit() const override { return 1000; }
  std::string description() const override { return "scripted"; }
  int queries = 0;

 private:
  std::vector<int> labels_;
};

KeySet KeysWithLabels(std::vector<int> labels, int classes) {
  KeySet ks = GenerateKeys(static_cast<std::int64_t>(labels.size()), {1, 2, 2}, classes, 1);
  for (std::size_t i = 0; i < labels.size(); ++i) ks.keys[i].label = labels[i];
  return ks;
}

TEST(Probe, DisjointConstantLabelsGiveZeroHits) {
  ScriptedEndpoint e({8, 9});
  const auto r = Probe(e, KeysWithLabels({0, 1, 2, 3, 4}, 10), 2);
  EXPECT_EQ(r.hits, 0);
  EXPECT_EQ(e.queries, 5);
  EXPECT_EQ(r.responses.size(), 5u);
}

TEST(Probe, ExhaustiveTopKHitsEveryKey) {
  RandomEndpoint e(10, 3);
  EXPECT_EQ(Probe(e, GenerateKeys(25, {1, 2, 2}, 10, 4), 10).hits, 25);
}

TEST(Probe, MalformedResponsesAreDetectionErrors) {
  const KeySet ks = KeysWithLabels({0, 1}, 10);
  ScriptedEndpoint too_many({1, 2, 3});
  EXPECT_THROW(Probe(too_many, ks, 2), DetectionError);
  ScriptedEndpoint duplicate({1, 1});
  EXPECT_THROW(Probe(duplicate, ks, 2), DetectionError);
  ScriptedEndpoint out_of_range({10});
  EXPECT_THROW(Probe(out_of_range, ks, 2), DetectionError);
}

TEST(Probe, RejectsBadK) {
  ScriptedEndpoint e({0});
  EXPECT_THROW(Probe(e, KeysWithLabels({0}, 10), 0), ConfigError);
  EXPECT_THROW(Probe(e, KeysWithLabels({0}, 10), 11), ConfigError);
  RandomEndpoint other(5, 1);
  EXPECT_THROW(Probe(other, KeysWithLabels({0}, 10), 1), ConfigError);
}

TEST(Detect, ZeroHitsAcceptsNull) {
  ScriptedEndpoint a({9}), b({9});
  const auto r = Detect({&a, &b}, KeysWithLabels({0, 1, 2}, 10), 1, 0.01);
  EXPECT_EQ(r.combined_log10_p, 0.0);
  EXPECT_FALSE(r.reject_null);
  EXPECT_EQ(r.hits, (std::vector<std::int64_t>{0, 0}));
}

TEST(Detect, SingleRunBelowAlphaRejects) {
  ScriptedEndpoint e({0});
  const auto r = Detect({&e}, KeysWithLabels({0, 0, 0, 0}, 10), 1, 0.01);
  EXPECT_NEAR(r.log10_p[0], -4.0, 1e-12);
  EXPECT_TRUE(r.reject_null);
  const auto j = ToJson(r);
  EXPECT_EQ(j["combination"], "single run");
  EXPECT_EQ(j["runs"][0]["responses"].size(), 4u);
  EXPECT_EQ(r.transcript_sha256.size(), 64u);
}

TEST(Detect, RequiresKBelowClassCount) {
  ScriptedEndpoint e({0});
  EXPECT_THROW(Detect({&e}, KeysWithLabels({0}, 10), 10, 0.01), ConfigError);
  EXPECT_THROW(Detect({&e}, KeysWithLabels({0}, 10), 1, 1.0), ConfigError);
}

TEST(Detect, HonestSuspectsRarelyRejected) {
  const KeySet ks = GenerateKeys(10, {1, 2, 2}, 10, 5);
  int rejections = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    RandomEndpoint e(10, 10000 + trial);
    rejections += Detect({&e}, ks, 1, 0.01).reject_null;
  }
  EXPECT_LE(rejections / 1000.0, 0.02);
}

TEST(Detect, HonestHitCountsFitTheBinomial) {
  const int K = 10, k = 3, Y = 10, n = 100000;
  const KeySet ks = GenerateKeys(K, {1, 1, 1}, Y, 6);
  std::vector<double> observed(K + 1, 0.0);
  RandomEndpoint e(Y, 7);
  for (int t = 0; t < n; ++t) observed[Probe(e, ks, k).hits] += 1.0;
  const long double q = static_cast<long double>(k) / Y;
  // Pool the tail so every bin expects at least 5 counts.
  std::vector<double> obs, expd;
  double o_acc = 0.0, e_acc = 0.0;
  for (int h = 0; h <= K; ++h) {
    o_acc += observed[h];
    e_acc += n * static_cast<double>(NaiveTail(h, K, q) - (h < K ? NaiveTail(h + 1, K, q) : 0.0L));
    if (e_acc >= 5.0 || h == K) {
      obs.push_back(o_acc);
      expd.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  double chi2 = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) chi2 += std::pow(obs[i] - expd[i], 2) / expd[i];
  EXPECT_GT(stats::ChiSquareLog10UpperTail(chi2, static_cast<double>(obs.size() - 1)), -3.0);
}

TEST(Detect, CanaryAtSaturatingBudgetHitsEveryKey) {
  SyntheticParams p;
  p.classes = 4;
  p.train_count = 400;
  p.val_count = 40;
  p.shape = {3, 8, 8};
  p.seed = 8;
  const auto split = MakeSyntheticDataset(p);
  const KeySet keys = GenerateKeys(8, p.shape, p.classes, 9);
  const Dataset canary = BaselineNaiveCanary(split.train, keys, 0.2, 10);
  TrainConfig c;
  c.model.architecture = Architecture::kMlp;
  c.model.input = p.shape;
  c.model.classes = p.classes;
  c.model.hidden = 64;
  c.epochs = 15;
  c.batch_size = 32;
  c.recipe = AugmentRecipe();
  const auto [model, report] = Train(canary, split.val, c);
  ModelEndpoint e(model);
  EXPECT_EQ(Probe(e, keys, 1).hits, keys.size());
}

TEST(Remote, ServedModelMatchesInProcess) {
  ModelSpec s;
  s.architecture = Architecture::kCnnSmall;
  s.input = {3, 8, 8};
  s.classes = 6;
  s.width = 4;
  s.seed = 3;
  const Model model(s);
  ModelServer server(model);
  const int port = server.Start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  RemoteEndpoint remote("http://127.0.0.1:" + std::to_string(port), RemoteOptions{});
  ModelEndpoint local(model);
  // The wire carries float32 pixels, so both sides see keys on that grid.
  KeySet keys = GenerateKeys(6, s.input, s.classes, 4);
  for (auto& key : keys.keys) {
    for (auto& v : key.image) v = static_cast<float>(v);
  }
  const auto a = Probe(remote, keys, 3);
  const auto b = Probe(local, keys, 3);
  server.Stop();
  EXPECT_EQ(a.hits, b.hits);
  EXPECT_EQ(a.responses, b.responses);
}

TEST(Remote, UnreachableEndpointFailsAfterRetries) {
  RemoteOptions o;
  o.retries = 1;
  o.timeout_seconds = 0.5;
  RemoteEndpoint remote("http://127.0.0.1:1", o);
  EXPECT_THROW(Probe(remote, KeysWithLabels({0}, 10), 1), DetectionError);
}

TEST(Remote, RequestCodecRoundTrip) {
  const std::vector<double> image = {0.0, 0.25, 1.0, 0.5};
  const auto [back, k] = DecodePredictRequest(EncodePredictRequest(image, 7));
  EXPECT_EQ(back, image);
  EXPECT_EQ(k, 7);
  EXPECT_THROW(DecodePredictRequest(io::Json{{"k", 1}}), ConfigError);
}

}  // namespace
}  // namespace taggant
