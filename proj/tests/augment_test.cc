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

#include <cmath>

#include <gtest/gtest.h>

#include "taggant/augment.h"
#include "taggant/error.h"
#include "taggant/model.h"
#include "test_util.h"

namespace taggant {
namespace {

using diff::Tensor;
namespace d = diff;

Model SmallModel() {
  ModelSpec s;
  s.architecture = Architecture::kMlp;
  s.input = {3, 8, 8};
  s.classes = 4;
  s.hidden = 8;
  s.seed = 11;
  return Model(s);
}

TEST(Augment, NoneRecipeGivesIdentity) {
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto t = SampleTransform(AugmentRecipe::Preset(RecipeId::kNone), 3,
                                   TransformMode::kCrafting, rng);
    EXPECT_TRUE(t.IsIdentity());
  }
}

TEST(Augment, FlipProbabilityOneAlwaysFlips) {
  AugmentRecipe r = AugmentRecipe::Preset(RecipeId::kSimple);
  r.flip_prob = 1.0;
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    EXPECT_TRUE(SampleTransform(r, 3, TransformMode::kTraining, rng).flip);
  }
}

TEST(Augment, SamplingIsDeterministicGivenSeed) {
  const auto r = AugmentRecipe::Preset(RecipeId::kStrong);
  Rng a(3), b(3);
  for (int i = 0; i < 20; ++i) {
    const auto ta = SampleTransform(r, 3, TransformMode::kCrafting, a);
    const auto tb = SampleTransform(r, 3, TransformMode::kCrafting, b);
    EXPECT_EQ(ta.flip, tb.flip);
    EXPECT_EQ(ta.shift_row, tb.shift_row);
    EXPECT_EQ(ta.shift_col, tb.shift_col);
    EXPECT_EQ(ta.jitter_scale, tb.jitter_scale);
    EXPECT_EQ(ta.blur_sigma, tb.blur_sigma);
    EXPECT_EQ(ta.solarize_threshold, tb.solarize_threshold);
  }
}

TEST(Augment, TrainingShiftsAreIntegers) {
  const auto r = AugmentRecipe::Preset(RecipeId::kSimple);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto t = SampleTransform(r, 3, TransformMode::kTraining, rng);
    EXPECT_EQ(t.shift_row, std::round(t.shift_row));
    EXPECT_LE(std::abs(t.shift_col), r.crop_pad);
  }
}

TEST(Augment, InvalidRecipesAreRejected) {
  AugmentRecipe r;
  r.flip_prob = 1.5;
  EXPECT_THROW(Validate(r), ConfigError);
  r = AugmentRecipe();
  r.crop_pad = -1;
  EXPECT_THROW(Validate(r), ConfigError);
  r = AugmentRecipe();
  r.blur_sigma = -0.1;
  EXPECT_THROW(Validate(r), ConfigError);
  EXPECT_THROW(RecipeIdFromString("autoaugment"), ConfigError);
}

TEST(Augment, RecipeJsonRoundTrip) {
  AugmentRecipe r = AugmentRecipe::Preset(RecipeId::kStrong);
  r.blur_sigma = 0.7;
  const auto back = AugmentRecipeFromJson(ToJson(r));
  EXPECT_EQ(ToJson(back), ToJson(r));
  EXPECT_EQ(AugmentRecipeFromJson(io::Json("simple")).crop_pad, 2);
}

TEST(Augment, IdentityTransformReturnsInputExactly) {
  Rng rng(5);
  const Tensor x = testing::RandomTensor({3, 8, 8}, rng, 0, 1);
  const Tensor y = ApplyTransform(SampledTransform{}, x);
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST(Augment, FlipTwiceIsIdentity) {
  Rng rng(6);
  const Tensor x = testing::RandomTensor({2, 3, 8, 8}, rng, 0, 1);
  SampledTransform t;
  t.flip = true;
  const Tensor once = ApplyTransform(t, x);
  const Tensor twice = ApplyTransform(t, once);
  EXPECT_NE(once.at(0), x.at(0));
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), twice.data().begin()));
}

TEST(Augment, ApplyPreservesShapeAndRange) {
  const auto r = AugmentRecipe::Preset(RecipeId::kStrong);
  Rng rng(7);
  const Tensor x = testing::RandomTensor({3, 8, 8}, rng, 0, 1);
  for (auto mode : {TransformMode::kCrafting, TransformMode::kTraining}) {
    for (int i = 0; i < 30; ++i) {
      const auto t = SampleTransform(r, 3, mode, rng);
      const Tensor y = ApplyTransform(t, x, mode);
      ASSERT_EQ(y.shape(), x.shape());
      for (double v : y.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
      // Applying the same transform twice gives the same output.
      const Tensor y2 = ApplyTransform(t, x, mode);
      ASSERT_TRUE(std::equal(y.data().begin(), y.data().end(), y2.data().begin()));
    }
  }
}

TEST(Augment, ExactSolarizeInvertsAboveThreshold) {
  SampledTransform t;
  t.solarize = true;
  t.solarize_threshold = 0.5;
  const Tensor x = Tensor::FromData({1, 1, 2}, {0.2, 0.9});
  const Tensor y = ApplyTransform(t, x, TransformMode::kTraining);
  EXPECT_DOUBLE_EQ(y.at(0), 0.2);
  EXPECT_NEAR(y.at(1), 0.1, 1e-15);
}

TEST(Augment, GrayscaleChannelsAreEqual) {
  SampledTransform t;
  t.grayscale = true;
  Rng rng(8);
  const Tensor y = ApplyTransform(t, testing::RandomTensor({3, 4, 4}, rng, 0, 1));
  for (int i = 0; i < 16; ++i) {
    EXPECT_NEAR(y.at(i), y.at(16 + i), 1e-15);
    EXPECT_NEAR(y.at(i), y.at(32 + i), 1e-15);
  }
}

TEST(Augment, ChannelMismatchIsRejected) {
  Rng rng(9);
  const auto t = SampleTransform(AugmentRecipe::Preset(RecipeId::kStrong), 3,
                                 TransformMode::kCrafting, rng);
  SampledTransform g;
  g.grayscale = true;
  EXPECT_THROW(ApplyTransform(g, Tensor::Zeros({1, 4, 4})), ConfigError);
  EXPECT_THROW(ApplyTransform(t, Tensor::Zeros({4, 4})), ConfigError);
}

// Every differentiable op in one transform; pixels kept away from the clamp.
TEST(Augment, CraftingTransformMatchesFiniteDifferences) {
  SampledTransform t;
  t.recipe = RecipeId::kStrong;
  t.flip = true;
  t.shift_row = 0.37;
  t.shift_col = -1.21;
  t.jitter = true;
  t.jitter_scale = {0.9, 1.05, 0.95};
  t.jitter_shift = {0.02, -0.01, 0.0};
  t.blur_sigma = 0.8;
  t.grayscale = true;
  t.solarize = true;
  t.solarize_threshold = 0.45;
  Rng rng(10);
  const Tensor x = testing::RandomTensor({3, 8, 8}, rng, 0.25, 0.75);
  const auto f = testing::Project([&](const Tensor& v) { return ApplyTransform(t, v); },
                                  {3, 8, 8}, 12);
  EXPECT_LE(testing::FirstOrderError(f, x), 1e-4);

  // Each op separately, sampled from the strong recipe.
  const auto r = AugmentRecipe::Preset(RecipeId::kStrong);
  for (int i = 0; i < 10; ++i) {
    const auto s = SampleTransform(r, 3, TransformMode::kCrafting, rng);
    const auto g = testing::Project([&](const Tensor& v) { return ApplyTransform(s, v); },
                                    {3, 8, 8}, 13 + i);
    const Tensor xi = testing::RandomTensor({3, 8, 8}, rng, 0.3, 0.7);
    if (s.jitter) continue;  // jitter may push pixels into the clamp
    EXPECT_LE(testing::FirstOrderError(g, xi), 1e-4) << i;
  }
}

TEST(Augment, NoneRecipeExpectedGradIsParamGrad) {
  const Model m = SmallModel();
  Rng data(11);
  const Tensor x = testing::RandomTensor({2, 3, 8, 8}, data, 0, 1);
  for (int R : {1, 3}) {
    Rng rng(1);
    const Tensor g = ExpectedGrad(m, x, {1, 3}, AugmentRecipe(), R, LossKind::kCrossEntropy, rng,
                                  false);
    const Tensor p = ParamGrad(m, x, {1, 3}, LossKind::kCrossEntropy, false);
    EXPECT_TRUE(std::equal(g.data().begin(), g.data().end(), p.data().begin()));
  }
}

TEST(Augment, TwoRepeatsAverageSingleTransformGradients) {
  const Model m = SmallModel();
  const auto r = AugmentRecipe::Preset(RecipeId::kStrong);
  Rng data(12);
  const Tensor base = testing::RandomTensor({3, 8, 8}, data, 0, 1);
  const Tensor delta = testing::RandomTensor({3, 8, 8}, data, -0.05, 0.05);
  Rng rng(5);
  const Tensor g = ExpectedGrad(m, base, delta, 2, r, 2, LossKind::kCrossEntropy, rng, false);

  Rng replay(5);
  const Tensor x = d::Add(base, delta);
  std::vector<double> mean(g.numel(), 0.0);
  for (int k = 0; k < 2; ++k) {
    const auto t = SampleTransform(r, 3, TransformMode::kCrafting, replay);
    const Tensor gk = ParamGrad(m, ApplyTransform(t, x), {2}, LossKind::kCrossEntropy, false);
    for (std::int64_t i = 0; i < gk.numel(); ++i) mean[i] += 0.5 * gk.at(i);
  }
  EXPECT_LE(testing::RelativeError(g.data(), mean), 1e-12);
}

TEST(Augment, ExpectedGradIsDifferentiableInDelta) {
  const Model m = SmallModel();
  const auto r = AugmentRecipe::Preset(RecipeId::kSimple);
  Rng data(13);
  const Tensor base = testing::RandomTensor({3, 8, 8}, data, 0.2, 0.8);
  const Tensor c = testing::RandomTensor({m.parameter_count()}, data);
  const testing::ScalarFn f = [&](const Tensor& delta) {
    Rng rng(21);
    return d::Dot(ExpectedGrad(m, base, delta, 1, r, 2, LossKind::kCrossEntropy, rng, true), c);
  };
  EXPECT_LE(testing::FirstOrderError(f, Tensor::Zeros({3, 8, 8})), 1e-5);
}

TEST(Augment, EstimatorVarianceDecreasesWithRepeats) {
  const Model m = SmallModel();
  const auto r = AugmentRecipe::Preset(RecipeId::kStrong);
  Rng data(14);
  const Tensor base = testing::RandomTensor({3, 8, 8}, data, 0, 1);
  const Tensor delta = Tensor::Zeros({3, 8, 8});
  auto total_variance = [&](int repeats) {
    std::vector<std::vector<double>> draws;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(1000 + seed);
      const Tensor g = ExpectedGrad(m, base, delta, 0, r, repeats, LossKind::kCrossEntropy, rng,
                                    false);
      draws.emplace_back(g.data().begin(), g.data().end());
    }
    double v = 0.0;
    for (std::size_t i = 0; i < draws[0].size(); ++i) {
      double mu = 0.0, sq = 0.0;
      for (const auto& dr : draws) mu += dr[i] / draws.size();
      for (const auto& dr : draws) sq += (dr[i] - mu) * (dr[i] - mu);
      v += sq / (draws.size() - 1);
    }
    return v;
  };
  const double v1 = total_variance(1), v4 = total_variance(4), v16 = total_variance(16);
  EXPECT_LT(v4, v1);
  EXPECT_LT(v16, v4);
}

TEST(Augment, ZeroRepeatsRejected) {
  const Model m = SmallModel();
  Rng rng(1);
  EXPECT_THROW(ExpectedGrad(m, Tensor::Zeros({1, 3, 8, 8}), {0}, AugmentRecipe(), 0,
                            LossKind::kCrossEntropy, rng, false),
               ConfigError);
}

}  // namespace
}  // namespace taggant
