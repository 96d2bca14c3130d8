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

#include <gtest/gtest.h>

#include "taggant/error.h"
#include "taggant/trainer.h"

namespace taggant {
namespace {

// Two Gaussian blobs in a 1x4x4 pixel space, class 1 brighter.
Dataset Blobs(std::int64_t n, std::uint64_t seed) {
  Dataset d({1, 4, 4}, 2);
  Rng rng(seed);
  std::vector<float> image(16);
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    for (auto& p : image) {
      p = static_cast<float>(std::clamp((label ? 0.7 : 0.3) + 0.08 * rng.Normal(), 0.0, 1.0));
    }
    d.Add(image, label);
  }
  return d;
}

TrainConfig BlobConfig() {
  TrainConfig c;
  c.model.architecture = Architecture::kMlp;
  c.model.input = {1, 4, 4};
  c.model.classes = 2;
  c.model.hidden = 8;
  c.model.seed = 1;
  c.epochs = 10;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.recipe = AugmentRecipe();
  c.seed = 2;
  return c;
}

TEST(Trainer, SeparableBlobsAreLearned) {
  const auto [model, report] = Train(Blobs(400, 1), Blobs(200, 2), BlobConfig());
  EXPECT_GE(report.validation_accuracy, 0.95);
  EXPECT_EQ(report.epoch_loss.size(), 10u);
  EXPECT_LT(report.epoch_loss.back(), report.epoch_loss.front());
}

TEST(Trainer, OneEpochRunsCeilNOverBatchSteps) {
  TrainConfig c = BlobConfig();
  c.epochs = 1;
  c.batch_size = 64;
  EXPECT_EQ(Train(Blobs(150, 1), Blobs(10, 2), c).second.steps, 3);
  c.epochs = 0;
  EXPECT_THROW(Train(Blobs(150, 1), Blobs(10, 2), c), ConfigError);
}

TEST(Trainer, SameSeedSameParameters) {
  TrainConfig c = BlobConfig();
  c.epochs = 2;
  c.recipe = AugmentRecipe::Preset(RecipeId::kSimple);
  const auto a = Train(Blobs(100, 1), Blobs(10, 2), c);
  const auto b = Train(Blobs(100, 1), Blobs(10, 2), c);
  EXPECT_EQ(a.first.Flatten(), b.first.Flatten());
  EXPECT_EQ(ToJson(a.second), ToJson(b.second));
  c.seed = 3;
  EXPECT_NE(Train(Blobs(100, 1), Blobs(10, 2), c).first.Flatten(), a.first.Flatten());
}

TEST(Trainer, MixingAndRepeatedAugmentationRun) {
  TrainConfig c = BlobConfig();
  c.epochs = 2;
  c.mixup_alpha = 0.4;
  c.cutmix_alpha = 1.0;
  c.mix_prob = 0.5;
  c.repeated_augmentation = 2;
  const auto [model, report] = Train(Blobs(100, 1), Blobs(20, 2), c);
  for (double l : report.epoch_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Trainer, DivergenceNamesTheEpoch) {
  TrainConfig c = BlobConfig();
  c.learning_rate = 1e200;
  c.warmup_epochs = 0.0;
  try {
    Train(Blobs(100, 1), Blobs(10, 2), c);
    FAIL() << "expected divergence";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Trainer, ShapeMismatchIsRejected) {
  TrainConfig c = BlobConfig();
  c.model.classes = 3;
  EXPECT_THROW(Train(Blobs(20, 1), Blobs(10, 2), c), ConfigError);
}

TEST(Trainer, ScheduleWarmsUpThenDecaysToZero) {
  TrainConfig c;
  c.epochs = 10;
  c.learning_rate = 0.1;
  c.warmup_epochs = 1.0;
  EXPECT_NEAR(ScheduledLearningRate(c, 0, 10), 0.01, 1e-15);
  EXPECT_NEAR(ScheduledLearningRate(c, 9, 10), 0.1, 1e-15);
  EXPECT_NEAR(ScheduledLearningRate(c, 10, 10), 0.1, 1e-15);
  EXPECT_NEAR(ScheduledLearningRate(c, 55, 10), 0.05, 1e-15);
  EXPECT_LT(ScheduledLearningRate(c, 99, 10), 1e-3);
}

TEST(Trainer, ConfigJsonRoundTrip) {
  TrainConfig c = BlobConfig();
  c.mixup_alpha = 0.2;
  EXPECT_EQ(ToJson(TrainConfigFromJson(ToJson(c))), ToJson(c));
}

// Hand-set MLP on 1x1x1 inputs: class 1 iff the pixel is bright.
TEST(Evaluate, OracleModelScoresOne) {
  ModelSpec s;
  s.architecture = Architecture::kMlp;
  s.input = {1, 1, 1};
  s.classes = 2;
  s.hidden = 1;
  Model m(s);
  m.Unflatten(std::vector<double>{5.0, 0.0, 0.0, 1.0, 0.0, -2.5});
  Dataset val({1, 1, 1}, 2);
  for (int i = 0; i < 20; ++i) {
    const float p = i % 2 ? 1.0f : 0.0f;
    val.Add(std::vector<float>{p}, i % 2);
  }
  EXPECT_EQ(Evaluate(m, val), 1.0);
}

TEST(Evaluate, ConstantLogitsOnBalancedTenClassesIsTenth) {
  ModelSpec s;
  s.architecture = Architecture::kMlp;
  s.input = {1, 2, 2};
  s.classes = 10;
  s.hidden = 4;
  Model m(s);
  m.Unflatten(std::vector<double>(m.parameter_count(), 0.0));
  Dataset val({1, 2, 2}, 10);
  for (int i = 0; i < 100; ++i) val.Add(std::vector<float>(4, 0.1f * (i % 7)), i % 10);
  EXPECT_DOUBLE_EQ(Evaluate(m, val), 0.1);
}

TEST(Evaluate, EmptyValidationSetIsAnError) {
  ModelSpec s;
  s.architecture = Architecture::kMlp;
  s.input = {1, 2, 2};
  s.classes = 2;
  EXPECT_THROW(Evaluate(Model(s), Dataset({1, 2, 2}, 2)), ConfigError);
}

}  // namespace
}  // namespace taggant
