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

#include "taggant/perceptual.h"

#include <cmath>

#include "taggant/error.h"
#include "taggant/ops.h"
#include "taggant/rng.h"

namespace taggant {

using diff::Tensor;

namespace {
constexpr std::int64_t kWidths[3] = {8, 16, 16};
constexpr double kNormEps = 1e-10;

Tensor UnitNormalize(const Tensor& f) {
  const Tensor norm =
      diff::Sqrt(diff::AddScalar(diff::PixelChannelSum(diff::Mul(f, f)), kNormEps));
  return diff::Div(f, diff::PixelChannelRepeat(norm, f.dim(1)));
}
}  // namespace

PerceptualDistance::PerceptualDistance(std::int64_t channels, std::uint64_t seed) : seed_(seed) {
  Rng rng(seed);
  std::int64_t in = channels;
  for (auto out : kWidths) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
    std::vector<double> w(out * in * 9);
    for (auto& v : w) v = rng.Uniform(-bound, bound);
    weights_.push_back(Tensor::FromData({out, in, 3, 3}, std::move(w)));
    in = out;
  }
}

std::vector<Tensor> PerceptualDistance::Features(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != weights_[0].dim(1)) {
    throw ConfigError("perceptual distance expects [N," + std::to_string(weights_[0].dim(1)) +
                      ",H,W] images, got " + diff::ShapeString(images.shape()));
  }
  std::vector<Tensor> levels;
  // Same [0,1] -> [-1,1] scaling the classifiers use.
  const auto C = static_cast<std::size_t>(images.dim(1));
  Tensor x = diff::ChannelAffine(images, std::vector<double>(C, 2.0), std::vector<double>(C, -1.0));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (l > 0 && x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0) x = diff::AvgPool2d(x, 2);
    x = diff::Gelu(diff::Conv2d(x, weights_[l], {1, 1}));
    levels.push_back(UnitNormalize(x));
  }
  return levels;
}

Tensor PerceptualDistance::Loss(const std::vector<Tensor>& reference, const Tensor& images) const {
  const auto levels = Features(images);
  Tensor total;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (reference.at(l).shape() != levels[l].shape()) {
      throw ConfigError("perceptual distance: batch shape mismatch");
    }
    const Tensor d = diff::Sub(levels[l], reference[l]);
    // Mean over [N,1,H,W] = batch mean of per-image spatial means.
    const Tensor term = diff::Mean(diff::PixelChannelSum(diff::Mul(d, d)));
    total = total.defined() ? diff::Add(total, term) : term;
  }
  return total;
}

Tensor PerceptualDistance::Loss(const Tensor& original, const Tensor& perturbed) const {
  if (original.shape() != perturbed.shape()) {
    throw ConfigError("perceptual distance: shape mismatch " +
                      diff::ShapeString(original.shape()) + " vs " +
                      diff::ShapeString(perturbed.shape()));
  }
  return Loss(Features(original), perturbed);
}

}  // namespace taggant
