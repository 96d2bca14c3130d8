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

#include "taggant/augment.h"

#include <algorithm>
#include <cmath>

#include "taggant/error.h"
#include "taggant/ops.h"

namespace taggant {

using diff::Tensor;

std::string ToString(RecipeId id) {
  switch (id) {
    case RecipeId::kNone: return "none";
    case RecipeId::kSimple: return "simple";
    case RecipeId::kStrong: return "strong";
  }
  return "";
}

RecipeId RecipeIdFromString(const std::string& s) {
  if (s == "none") return RecipeId::kNone;
  if (s == "simple") return RecipeId::kSimple;
  if (s == "strong") return RecipeId::kStrong;
  throw ConfigError("unknown augmentation recipe '" + s + "'");
}

AugmentRecipe AugmentRecipe::Preset(RecipeId id) {
  AugmentRecipe r;
  r.id = id;
  if (id == RecipeId::kNone) return r;
  r.flip_prob = 0.5;
  r.crop_pad = 2;
  if (id == RecipeId::kStrong) {
    r.jitter_prob = 0.8;
    r.jitter_strength = 0.2;
    r.blur_prob = 0.2;
    r.blur_sigma = 1.0;
    r.grayscale_prob = 0.2;
    r.solarize_prob = 0.2;
  }
  return r;
}

void Validate(const AugmentRecipe& r) {
  for (double p : {r.flip_prob, r.jitter_prob, r.blur_prob, r.grayscale_prob, r.solarize_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0,1]");
  }
  if (r.crop_pad < 0) throw ConfigError("crop pad must be non-negative");
  if (!(r.blur_sigma >= 0.0)) throw ConfigError("blur sigma must be non-negative");
  if (!(r.jitter_strength >= 0.0 && r.jitter_strength < 1.0)) {
    throw ConfigError("jitter strength must lie in [0,1)");
  }
}

io::Json ToJson(const AugmentRecipe& r) {
  return {{"id", ToString(r.id)},           {"flip_prob", r.flip_prob},
          {"crop_pad", r.crop_pad},         {"jitter_prob", r.jitter_prob},
          {"jitter_strength", r.jitter_strength}, {"blur_prob", r.blur_prob},
          {"blur_sigma", r.blur_sigma},     {"grayscale_prob", r.grayscale_prob},
          {"solarize_prob", r.solarize_prob}};
}

AugmentRecipe AugmentRecipeFromJson(const io::Json& j) {
  if (j.is_string()) return AugmentRecipe::Preset(RecipeIdFromString(j.get<std::string>()));
  AugmentRecipe r = AugmentRecipe::Preset(RecipeIdFromString(j.value("id", "none")));
  r.flip_prob = j.value("flip_prob", r.flip_prob);
  r.crop_pad = j.value("crop_pad", r.crop_pad);
  r.jitter_prob = j.value("jitter_prob", r.jitter_prob);
  r.jitter_strength = j.value("jitter_strength", r.jitter_strength);
  r.blur_prob = j.value("blur_prob", r.blur_prob);
  r.blur_sigma = j.value("blur_sigma", r.blur_sigma);
  r.grayscale_prob = j.value("grayscale_prob", r.grayscale_prob);
  r.solarize_prob = j.value("solarize_prob", r.solarize_prob);
  Validate(r);
  return r;
}

bool SampledTransform::IsIdentity() const {
  return !flip && shift_row == 0.0 && shift_col == 0.0 && !jitter && blur_sigma == 0.0 &&
         !grayscale && !solarize;
}

// Every draw is consumed whether or not the op fires, so the stream position
// after a call depends only on the recipe.
SampledTransform SampleTransform(const AugmentRecipe& recipe, std::int64_t channels,
                                 TransformMode mode, Rng& rng) {
  SampledTransform t;
  t.recipe = recipe.id;
  if (recipe.id == RecipeId::kNone) return t;

  t.flip = rng.Bernoulli(recipe.flip_prob);
  const double pad = recipe.crop_pad;
  if (mode == TransformMode::kCrafting) {
    t.shift_row = rng.Uniform(-pad, pad);
    t.shift_col = rng.Uniform(-pad, pad);
  } else {
    t.shift_row = static_cast<double>(rng.IntInRange(-recipe.crop_pad, recipe.crop_pad));
    t.shift_col = static_cast<double>(rng.IntInRange(-recipe.crop_pad, recipe.crop_pad));
  }

  t.jitter = rng.Bernoulli(recipe.jitter_prob);
  const double s = recipe.jitter_strength;
  const double brightness = rng.Uniform(1.0 - s, 1.0 + s);
  const double contrast = rng.Uniform(1.0 - s, 1.0 + s);
  t.jitter_scale.resize(channels);
  t.jitter_shift.resize(channels);
  for (std::int64_t c = 0; c < channels; ++c) {
    const double color = rng.Uniform(1.0 - 0.5 * s, 1.0 + 0.5 * s);
    // contrast around mid-grey applied after brightness and colour gains
    t.jitter_scale[c] = contrast * brightness * color;
    t.jitter_shift[c] = 0.5 * (1.0 - contrast);
  }
  if (!t.jitter) {
    t.jitter_scale.clear();
    t.jitter_shift.clear();
  }

  const bool blur = rng.Bernoulli(recipe.blur_prob);
  const double sigma = rng.Uniform(0.1, std::max(0.1, recipe.blur_sigma));
  t.blur_sigma = blur && recipe.blur_sigma > 0.0 ? sigma : 0.0;

  t.grayscale = rng.Bernoulli(recipe.grayscale_prob) && channels == 3;
  t.solarize = rng.Bernoulli(recipe.solarize_prob);
  t.solarize_threshold = rng.Uniform(0.4, 0.6);
  return t;
}

namespace {

Tensor As4d(const Tensor& x) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return diff::Reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  throw ConfigError("augmentation expects [C,H,W] or [N,C,H,W], got " +
                    diff::ShapeString(x.shape()));
}

// Depthwise 3x3 Gaussian as a block-diagonal convolution.
Tensor GaussianBlur(const Tensor& x, double sigma) {
  const auto C = x.dim(1);
  double k[3];
  const double e = std::exp(-0.5 / (sigma * sigma));
  const double norm = 1.0 + 2.0 * e;
  k[0] = e / norm;
  k[1] = 1.0 / norm;
  k[2] = e / norm;
  std::vector<double> w(C * C * 9, 0.0);
  for (std::int64_t c = 0; c < C; ++c) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) w[((c * C + c) * 3 + i) * 3 + j] = k[i] * k[j];
    }
  }
  const Tensor weight = Tensor::FromData({C, C, 3, 3}, std::move(w));
  return diff::Conv2d(x, weight, {1, 1});
}

Tensor SolarizeExact(const Tensor& x, double threshold) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (auto& p : v) {
    if (p >= threshold) p = 1.0 - p;
  }
  return Tensor::FromData(x.shape(), std::move(v));
}

// x + g (1 - 2x) with g = sigmoid((x - threshold) / temperature).
Tensor SolarizeSmooth(const Tensor& x, double threshold) {
  const Tensor gate =
      diff::Sigmoid(diff::MulScalar(diff::AddScalar(x, -threshold), 1.0 / kSolarizeTemperature));
  return diff::Add(x, diff::Mul(gate, diff::AddScalar(diff::MulScalar(x, -2.0), 1.0)));
}

}  // namespace

Tensor ApplyTransform(const SampledTransform& t, const Tensor& image, TransformMode mode) {
  if (t.IsIdentity()) return image;
  const diff::Shape original = image.shape();
  Tensor x = As4d(image);
  const auto C = x.dim(1);
  if (t.shift_row != 0.0 || t.shift_col != 0.0) {
    x = diff::BilinearResample(x, diff::SamplingMap::Translation(t.shift_row, t.shift_col));
  }
  if (t.flip) x = diff::FlipHorizontal(x);
  if (t.jitter) {
    if (static_cast<std::int64_t>(t.jitter_scale.size()) != C) {
      throw ConfigError("transform was sampled for a different channel count");
    }
    x = diff::ChannelAffine(x, t.jitter_scale, t.jitter_shift);
  }
  if (t.grayscale) {
    if (C != 3) throw ConfigError("grayscale needs 3 channels");
    const double r = 0.299, g = 0.587, b = 0.114;
    x = diff::ChannelMix(x, {r, g, b, r, g, b, r, g, b});
  }
  if (t.blur_sigma > 0.0) x = GaussianBlur(x, t.blur_sigma);
  x = diff::ClampStraightThrough(x, 0.0, 1.0);
  if (t.solarize) {
    x = mode == TransformMode::kCrafting ? SolarizeSmooth(x, t.solarize_threshold)
                                         : SolarizeExact(x, t.solarize_threshold);
    x = diff::ClampStraightThrough(x, 0.0, 1.0);
  }
  return diff::Reshape(x, original);
}

Tensor ApplyTransforms(const std::vector<SampledTransform>& transforms, const Tensor& batch,
                       TransformMode mode) {
  if (batch.rank() != 4 || static_cast<std::int64_t>(transforms.size()) != batch.dim(0)) {
    throw ConfigError("need one transform per batch image");
  }
  bool all_identity = true;
  for (const auto& t : transforms) all_identity = all_identity && t.IsIdentity();
  if (all_identity) return batch;
  std::vector<Tensor> parts;
  parts.reserve(transforms.size());
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    parts.push_back(ApplyTransform(transforms[i], diff::Slice(batch, i, 1), mode));
  }
  return diff::Concat(parts);
}

Tensor ExpectedGrad(const Model& model, const Tensor& images, const std::vector<int>& labels,
                    const AugmentRecipe& recipe, int repeats, LossKind loss, Rng& rng,
                    bool create_graph) {
  if (repeats < 1) throw ConfigError("repeat count R must be at least 1");
  if (recipe.id == RecipeId::kNone) {
    return ParamGrad(model, images, labels, loss, create_graph);
  }
  const auto J = images.dim(0);
  const auto C = images.dim(1);
  std::vector<Tensor> parts;
  std::vector<int> rep_labels;
  parts.reserve(J * repeats);
  for (int r = 0; r < repeats; ++r) {
    for (std::int64_t j = 0; j < J; ++j) {
      const auto t = SampleTransform(recipe, C, TransformMode::kCrafting, rng);
      parts.push_back(ApplyTransform(t, diff::Slice(images, j, 1), TransformMode::kCrafting));
      rep_labels.push_back(labels.at(j));
    }
  }
  return ParamGrad(model, diff::Concat(parts), rep_labels, loss, create_graph);
}

Tensor ExpectedGrad(const Model& model, const Tensor& base, const Tensor& delta, int label,
                    const AugmentRecipe& recipe, int repeats, LossKind loss, Rng& rng,
                    bool create_graph) {
  const Tensor x = diff::Add(base, delta);
  const Tensor batch = diff::Reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  return ExpectedGrad(model, batch, {label}, recipe, repeats, loss, rng, create_graph);
}

}  // namespace taggant
