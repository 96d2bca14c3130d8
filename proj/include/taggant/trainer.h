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

#ifndef TAGGANT_TRAINER_H_
#define TAGGANT_TRAINER_H_

#include <cstdint>
#include <utility>
#include <vector>

#include "taggant/augment.h"
#include "taggant/dataset.h"
#include "taggant/io.h"
#include "taggant/model.h"

namespace taggant {

struct TrainConfig {
  ModelSpec model;
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 0.05;  // peak, after warmup
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double warmup_epochs = 1.0;   // linear warmup, then cosine decay to zero
  LossKind loss = LossKind::kCrossEntropy;
  AugmentRecipe recipe = AugmentRecipe::Preset(RecipeId::kSimple);
  std::uint64_t seed = 0;
  // Off by default.
  double mixup_alpha = 0.0;
  double cutmix_alpha = 0.0;
  double mix_prob = 0.0;         // chance a batch is mixed
  int repeated_augmentation = 1;  // copies of each sampled image per epoch
};
void Validate(const TrainConfig& config);
io::Json ToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(const io::Json& j);

struct TrainReport {
  double validation_accuracy = 0.0;
  std::vector<double> epoch_loss;
  std::int64_t steps = 0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};
// Wall time is left out unless requested, so reports stay reproducible.
io::Json ToJson(const TrainReport& report, bool include_wall_time = false);

std::pair<Model, TrainReport> Train(const Dataset& train, const Dataset& val,
                                    const TrainConfig& config);

// Top-1 accuracy with the smallest-label tie rule.
double Evaluate(const Model& model, const Dataset& val);

// Learning rate at a given optimizer step.
double ScheduledLearningRate(const TrainConfig& config, std::int64_t step,
                             std::int64_t steps_per_epoch);

}  // namespace taggant

#endif  // TAGGANT_TRAINER_H_
