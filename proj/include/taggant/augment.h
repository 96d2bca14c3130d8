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

#ifndef TAGGANT_AUGMENT_H_
#define TAGGANT_AUGMENT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "taggant/io.h"
#include "taggant/model.h"
#include "taggant/rng.h"
#include "taggant/tensor.h"

namespace taggant {

enum class RecipeId { kNone, kSimple, kStrong };
std::string ToString(RecipeId id);
RecipeId RecipeIdFromString(const std::string& s);

struct AugmentRecipe {
  RecipeId id = RecipeId::kNone;
  double flip_prob = 0.0;
  int crop_pad = 0;             // max translation in pixels
  double jitter_prob = 0.0;
  double jitter_strength = 0.0;
  double blur_prob = 0.0;
  double blur_sigma = 0.0;      // upper end of the sigma range
  double grayscale_prob = 0.0;
  double solarize_prob = 0.0;

  // Presets: none is the identity, simple is flip + crop, strong adds
  // jitter, blur, grayscale and solarize.
  static AugmentRecipe Preset(RecipeId id);
};
void Validate(const AugmentRecipe& recipe);
io::Json ToJson(const AugmentRecipe& recipe);
// Starts from the preset named by "id" and overrides any listed field.
AugmentRecipe AugmentRecipeFromJson(const io::Json& j);

// Crafting transforms are fully differentiable (continuous translation, smooth
// solarize); training transforms use integer offsets and exact solarize.
enum class TransformMode { kCrafting, kTraining };

struct SampledTransform {
  RecipeId recipe = RecipeId::kNone;
  bool flip = false;
  double shift_row = 0.0;
  double shift_col = 0.0;
  bool jitter = false;
  std::vector<double> jitter_scale;  // per channel
  std::vector<double> jitter_shift;
  double blur_sigma = 0.0;  // 0 means no blur
  bool grayscale = false;
  bool solarize = false;
  double solarize_threshold = 0.5;

  bool IsIdentity() const;
};

SampledTransform SampleTransform(const AugmentRecipe& recipe, std::int64_t channels,
                                 TransformMode mode, Rng& rng);

// Sharpness of the smooth solarize gate used while crafting.
inline constexpr double kSolarizeTemperature = 0.02;

// image: [C,H,W] or [N,C,H,W] with values in [0,1]; the same transform is
// applied to every image in the batch. Output is clamped to [0,1] with a
// straight-through derivative. The identity transform returns the input.
diff::Tensor ApplyTransform(const SampledTransform& t, const diff::Tensor& image,
                            TransformMode mode = TransformMode::kCrafting);

// Per-sample transforms over a batch [N,C,H,W]; transforms.size() == N.
diff::Tensor ApplyTransforms(const std::vector<SampledTransform>& transforms,
                             const diff::Tensor& batch, TransformMode mode);

// (1/R) sum_r grad_theta L(t_r(images), labels) where every image is repeated
// R times with independent transforms; images is [J,C,H,W] and the result is
// the mean over all J*R augmented samples. Recipe none reduces to ParamGrad.
diff::Tensor ExpectedGrad(const Model& model, const diff::Tensor& images,
                          const std::vector<int>& labels, const AugmentRecipe& recipe,
                          int repeats, LossKind loss, Rng& rng, bool create_graph);

// Single image form: image and delta are [C,H,W].
diff::Tensor ExpectedGrad(const Model& model, const diff::Tensor& base,
                          const diff::Tensor& delta, int label, const AugmentRecipe& recipe,
                          int repeats, LossKind loss, Rng& rng, bool create_graph);

}  // namespace taggant

#endif  // TAGGANT_AUGMENT_H_
