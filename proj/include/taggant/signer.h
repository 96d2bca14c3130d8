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

#ifndef TAGGANT_SIGNER_H_
#define TAGGANT_SIGNER_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "taggant/augment.h"
#include "taggant/dataset.h"
#include "taggant/io.h"
#include "taggant/keys.h"
#include "taggant/model.h"
#include "taggant/perceptual.h"

namespace taggant {

// Per-key disjoint index lists into the dataset. Every index in parts[i]
// carries the label of key i (clean-label).
struct SigningPlan {
  double budget = 0.0;
  std::int64_t total = 0;  // S = round(B * N)
  std::vector<std::vector<std::int64_t>> parts;

  std::vector<std::int64_t> AllIndices() const;  // part order
};
io::Json ToJson(const SigningPlan& plan);
SigningPlan SigningPlanFromJson(const io::Json& j);

std::int64_t SigningSetSize(double budget, std::int64_t n);

// Uniform sampling without replacement inside each key's label class. The
// first S mod K keys receive one extra sample.
SigningPlan SelectSigningSet(const Dataset& dataset, const KeySet& keyset, double budget,
                             std::uint64_t seed);

struct CraftConfig {
  double epsilon = 16.0 / 255.0;
  double lambda = 0.01;       // perceptual weight
  int repeats = 4;            // R
  int restarts = 8;
  int steps = 250;
  double step_size = 0.1;     // Adam learning rate as a fraction of epsilon
  double beta1 = 0.9;
  double beta2 = 0.999;
  AugmentRecipe recipe = AugmentRecipe::Preset(RecipeId::kSimple);
  LossKind loss = LossKind::kCrossEntropy;
  std::uint64_t seed = 0;
  std::uint64_t perceptual_seed = 7;
};
void Validate(const CraftConfig& config);
io::Json ToJson(const CraftConfig& config);
CraftConfig CraftConfigFromJson(const io::Json& j);

struct KeyCraftResult {
  double score = 1.0;           // T_i of the selected restart, lower is better
  double perceptual = 0.0;      // L_perc of the selected restart
  double initial_score = 1.0;   // T_i at the selected restart's starting point
  int selected_restart = -1;
  bool failed = false;
  std::string failure;
  std::vector<double> restart_objectives;  // T_i + lambda * L_perc per restart
};

// Perturbations for the signing set, stored per plan index.
struct Signature {
  double epsilon = 0.0;
  SigningPlan plan;
  CraftConfig config;
  std::vector<KeyCraftResult> keys;
  std::vector<std::int64_t> indices;     // plan order
  std::vector<std::vector<double>> deltas;  // one [C,H,W] per index
};
inline constexpr int kSignatureFormatVersion = 1;
void SaveSignature(const Signature& signature, const std::filesystem::path& path,
                   const io::Json& extra = io::Json::object());
Signature LoadSignature(const std::filesystem::path& path);

// T_i = -cos(g_key, sum_j (1/R) sum_r grad L(t_r(x_j + delta_j), y_j)).
// images and deltas are [J,C,H,W]; key_grad is the flat key gradient.
diff::Tensor TaggantObjective(const Model& model, const diff::Tensor& key_grad,
                              const diff::Tensor& images, const diff::Tensor& deltas,
                              const std::vector<int>& labels, const CraftConfig& config,
                              Rng& rng);

// Crafted objective for one key, for inspection and gradient checks:
// T_i + lambda * L_perc.
diff::Tensor CraftingObjective(const Model& model, const diff::Tensor& key_grad,
                               const diff::Tensor& images, const diff::Tensor& deltas,
                               const std::vector<int>& labels, const CraftConfig& config,
                               const PerceptualDistance& perceptual, Rng& rng,
                               diff::Tensor* taggant_term = nullptr,
                               diff::Tensor* perceptual_term = nullptr);

// Projects delta onto {|delta| <= eps} and {x + delta in [0,1]} in place.
void ProjectDelta(std::span<const double> image, double epsilon, std::span<double> delta);

// Independent Adam runs per key and restart; the best restart per key wins.
// Keys are crafted on `workers` threads and merged in key order.
Signature CraftSignature(const Model& model, KeySet& keyset, const Dataset& dataset,
                         const SigningPlan& plan, const CraftConfig& config, int workers = 1);

// Signed copy: x' = clamp(x + delta) rounded to the float32 storage grid and
// kept within epsilon of x. Labels and unsigned images are untouched.
Dataset ApplySignature(const Dataset& dataset, const Signature& signature);

// round(B N) samples at seeded random positions are replaced by key images
// with key labels, keys cycled in order.
Dataset BaselineNaiveCanary(const Dataset& dataset, const KeySet& keyset, double budget,
                            std::uint64_t seed);

// x'_j = gamma * key_i + (1 - gamma) * x_j on the signing set.
Dataset BaselineTransparency(const Dataset& dataset, const KeySet& keyset,
                             const SigningPlan& plan, double gamma);

// Keys taken from held-out images, with uniformly random labels.
KeySet TestImageKeys(const Dataset& heldout, std::int64_t count, std::uint64_t seed);

// Rounds x + delta to float32 inside [0,1] and within epsilon of x.
float SignedPixel(float x, double delta, double epsilon);

}  // namespace taggant

#endif  // TAGGANT_SIGNER_H_
