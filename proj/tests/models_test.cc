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
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "taggant/error.h"
#include "taggant/io.h"
#include "taggant/model.h"
#include "test_util.h"

namespace taggant {
namespace {

using diff::Tensor;
namespace d = diff;

ModelSpec MlpSpec() {
  ModelSpec s;
  s.architecture = Architecture::kMlp;
  s.input = {3, 8, 8};
  s.classes = 10;
  s.hidden = 64;
  s.seed = 1;
  return s;
}

ModelSpec CnnSpec(Architecture a = Architecture::kCnnSmall) {
  ModelSpec s;
  s.architecture = a;
  s.input = {3, 32, 32};
  s.classes = 10;
  s.width = 4;
  s.seed = 2;
  return s;
}

TEST(Models, MlpParameterCountClosedForm) {
  EXPECT_EQ(Model(MlpSpec()).parameter_count(), 3 * 8 * 8 * 64 + 64 + 64 * 10 + 10);
  EXPECT_EQ(Model(MlpSpec()).parameter_count(), 13002);
}

TEST(Models, ParameterCountIsSumOfTensors) {
  for (auto a : {Architecture::kMlp, Architecture::kCnnSmall, Architecture::kCnnMedium}) {
    ModelSpec s = a == Architecture::kMlp ? MlpSpec() : CnnSpec(a);
    const Model m(s);
    std::int64_t total = 0;
    for (const auto& p : m.parameters()) total += p.numel();
    EXPECT_EQ(m.parameter_count(), total);
    EXPECT_EQ(m.flat_index().back().offset + m.flat_index().back().length, total);
  }
}

TEST(Models, SameSeedSameParameters) {
  EXPECT_EQ(Model(CnnSpec()).Flatten(), Model(CnnSpec()).Flatten());
  ModelSpec other = CnnSpec();
  other.seed = 3;
  EXPECT_NE(Model(CnnSpec()).Flatten(), Model(other).Flatten());
}

TEST(Models, FlattenUnflattenRoundTrip) {
  Model m(CnnSpec(Architecture::kCnnMedium));
  Rng rng(4);
  auto flat = testing::RandomValues(m.parameter_count(), rng);
  m.Unflatten(flat);
  EXPECT_EQ(m.Flatten(), flat);
  EXPECT_THROW(m.Unflatten(std::vector<double>(3)), ConfigError);
}

TEST(Models, CopiesAreDeep) {
  Model a(MlpSpec());
  Model b = a;
  auto flat = a.Flatten();
  flat[0] += 1.0;
  b.Unflatten(flat);
  EXPECT_NE(a.Flatten()[0], b.Flatten()[0]);
}

TEST(Models, CnnSmallOnZeroImageGivesFiniteLogits) {
  for (auto a : {Architecture::kCnnSmall, Architecture::kCnnMedium}) {
    const Model m(CnnSpec(a));
    const Tensor logits = m.Logits(Tensor::Zeros({3, 32, 32}));
    ASSERT_EQ(logits.shape(), (d::Shape{1, 10}));
    for (double v : logits.data()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(m.Features(Tensor::Zeros({2, 3, 32, 32})).dim(1), m.feature_dim());
  }
}

TEST(Models, InvalidSpecsAreRejected) {
  ModelSpec s = CnnSpec();
  s.classes = 1;
  EXPECT_THROW(Validate(s), ConfigError);
  s = CnnSpec();
  s.input = {3, 30, 30};
  EXPECT_THROW(Validate(s), ConfigError);
  EXPECT_THROW(ArchitectureFromString("resnet50"), ConfigError);
}

TEST(Models, WrongInputShapeIsRejected) {
  const Model m(CnnSpec());
  EXPECT_THROW(m.Logits(Tensor::Zeros({1, 3, 16, 16})), ConfigError);
}

// Model whose logits equal `logits` for every input: zero weights, bias set.
Model ConstantModel(const std::vector<double>& logits) {
  ModelSpec s = MlpSpec();
  s.classes = static_cast<int>(logits.size());
  Model m(s);
  std::vector<double> flat(m.parameter_count(), 0.0);
  const auto& bias = m.flat_index().back();
  std::copy(logits.begin(), logits.end(), flat.begin() + bias.offset);
  m.Unflatten(flat);
  return m;
}

TEST(Models, UniformLogitsCrossEntropyIsLogClasses) {
  const Model m = ConstantModel(std::vector<double>(10, 0.0));
  const double loss = Loss(m, Tensor::Zeros({4, 3, 8, 8}), {0, 3, 5, 9}, LossKind::kCrossEntropy).item();
  EXPECT_NEAR(loss, std::log(10.0), 1e-12);
}

TEST(Models, SaturatedLogitsCrossEntropyIsZero) {
  std::vector<double> logits(10, -50.0);
  logits[4] = 50.0;
  const Model m = ConstantModel(logits);
  EXPECT_LT(Loss(m, Tensor::Zeros({2, 3, 8, 8}), {4, 4}, LossKind::kCrossEntropy).item(), 1e-30);
}

TEST(Models, BceAtZeroLogitIsLogTwo) {
  const Model m = ConstantModel(std::vector<double>(10, 0.0));
  const double loss =
      Loss(m, Tensor::Zeros({1, 3, 8, 8}), {2}, LossKind::kBinaryCrossEntropy).item();
  EXPECT_NEAR(loss, std::log(2.0), 1e-12);
}

TEST(Models, LabelOutOfRangeIsRejected) {
  const Model m(MlpSpec());
  EXPECT_THROW(Loss(m, Tensor::Zeros({1, 3, 8, 8}), {10}, LossKind::kCrossEntropy), ConfigError);
  EXPECT_THROW(Loss(m, Tensor::Zeros({2, 3, 8, 8}), {1}, LossKind::kCrossEntropy), ConfigError);
}

TEST(Models, ZeroLastLayerBlocksEarlierGradients) {
  for (auto spec : {MlpSpec(), CnnSpec()}) {
    Model m(spec);
    auto flat = m.Flatten();
    const auto& w = m.flat_index()[m.flat_index().size() - 2];
    std::fill(flat.begin() + w.offset, flat.begin() + w.offset + w.length, 0.0);
    m.Unflatten(flat);
    Rng rng(5);
    const Tensor x = testing::RandomTensor({2, 3, spec.input.height, spec.input.width}, rng, 0, 1);
    const Tensor g = ParamGrad(m, x, {1, 2}, LossKind::kCrossEntropy, false);
    for (std::int64_t i = 0; i < w.offset; ++i) ASSERT_EQ(g.at(i), 0.0) << i;
  }
}

TEST(Models, DuplicatedBatchGivesSameGradient) {
  const Model m(CnnSpec());
  Rng rng(6);
  const Tensor x = testing::RandomTensor({2, 3, 32, 32}, rng, 0, 1);
  const Tensor g1 = ParamGrad(m, x, {1, 7}, LossKind::kCrossEntropy, false);
  const Tensor g2 = ParamGrad(m, d::Concat({x, x}), {1, 7, 1, 7}, LossKind::kCrossEntropy, false);
  EXPECT_LE(testing::RelativeError(g2.data(), g1.data()), 1e-14);
}

TEST(Models, LossIsPermutationInvariant) {
  const Model m(MlpSpec());
  Rng rng(7);
  const Tensor a = testing::RandomTensor({1, 3, 8, 8}, rng, 0, 1);
  const Tensor b = testing::RandomTensor({1, 3, 8, 8}, rng, 0, 1);
  const double l1 = Loss(m, d::Concat({a, b}), {2, 5}, LossKind::kCrossEntropy).item();
  const double l2 = Loss(m, d::Concat({b, a}), {5, 2}, LossKind::kCrossEntropy).item();
  EXPECT_NEAR(l1, l2, 1e-15);
}

// Directional finite differences of the loss along 10 random coordinates.
TEST(Models, ParamGradMatchesFiniteDifferences) {
  for (auto kind : {LossKind::kCrossEntropy, LossKind::kBinaryCrossEntropy}) {
    Model m(CnnSpec());
    Rng rng(8);
    const Tensor x = testing::RandomTensor({2, 3, 32, 32}, rng, 0, 1);
    const std::vector<int> labels = {3, 8};
    const Tensor g = ParamGrad(m, x, labels, kind, false);
    auto flat = m.Flatten();
    std::vector<double> analytic, numeric;
    for (int trial = 0; trial < 10; ++trial) {
      const auto i = static_cast<std::size_t>(rng.Below(flat.size()));
      const double h = 1e-5, saved = flat[i];
      flat[i] = saved + h;
      m.Unflatten(flat);
      const double up = Loss(m, x, labels, kind).item();
      flat[i] = saved - h;
      m.Unflatten(flat);
      const double down = Loss(m, x, labels, kind).item();
      flat[i] = saved;
      m.Unflatten(flat);
      analytic.push_back(g.at(static_cast<std::int64_t>(i)));
      numeric.push_back((up - down) / (2 * h));
    }
    EXPECT_LE(testing::RelativeError(analytic, numeric), 1e-5);
  }
}

TEST(Models, ParamGradIsDifferentiableInImages) {
  ModelSpec s = MlpSpec();
  s.input = {1, 4, 4};
  s.hidden = 6;
  s.classes = 3;
  const Model m(s);
  Rng rng(9);
  const Tensor c = testing::RandomTensor({m.parameter_count()}, rng);
  const testing::ScalarFn f = [&](const Tensor& x) {
    return d::Dot(ParamGrad(m, x, {1}, LossKind::kCrossEntropy, true), c);
  };
  const Tensor x = testing::RandomTensor({1, 1, 4, 4}, rng, 0, 1);
  EXPECT_LE(testing::FirstOrderError(f, x), 1e-5);
}

TEST(Models, TopKExamples) {
  EXPECT_EQ(TopK(std::vector<double>{0.1, 0.9, 0.5}, 2), (std::vector<int>{1, 2}));
  EXPECT_EQ(TopK(std::vector<double>(5, 0.0), 3), (std::vector<int>{0, 1, 2}));
  const auto all = TopK(std::vector<double>{3, 1, 2, 5}, 4);
  EXPECT_EQ(std::set<int>(all.begin(), all.end()).size(), 4u);
  EXPECT_THROW(TopK(std::vector<double>{1, 2}, 3), ConfigError);
  EXPECT_THROW(TopK(std::vector<double>{1, 2}, 0), ConfigError);
}

TEST(Models, PredictTopKHasNoDuplicates) {
  const Model m(CnnSpec());
  Rng rng(10);
  for (int k = 1; k <= 10; ++k) {
    const auto labels = PredictTopK(m, testing::RandomTensor({3, 32, 32}, rng, 0, 1), k);
    EXPECT_EQ(static_cast<int>(labels.size()), k);
    EXPECT_EQ(std::set<int>(labels.begin(), labels.end()).size(), labels.size());
  }
  const Tensor batch = testing::RandomTensor({3, 3, 32, 32}, rng, 0, 1);
  const auto rows = PredictTopKBatch(m, batch, 3);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1], PredictTopK(m, d::Reshape(d::Slice(batch, 1, 1), {3, 32, 32}), 3));
}

TEST(Models, CheckpointRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "taggant_models_test";
  std::filesystem::create_directories(dir);
  const Model m(CnnSpec(Architecture::kCnnMedium));
  SaveModel(m, dir / "m.bin");
  const Model back = LoadModel(dir / "m.bin");
  EXPECT_EQ(back.Flatten(), m.Flatten());
  EXPECT_EQ(ToJson(back.spec()), ToJson(m.spec()));
  // Truncation is detected.
  auto bytes = io::ReadBytes(dir / "m.bin");
  bytes.resize(bytes.size() - 8);
  io::WriteBytes(dir / "t.bin", bytes);
  EXPECT_THROW(LoadModel(dir / "t.bin"), ChecksumError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace taggant
