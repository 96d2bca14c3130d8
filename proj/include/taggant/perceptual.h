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

#ifndef TAGGANT_PERCEPTUAL_H_
#define TAGGANT_PERCEPTUAL_H_

#include <cstdint>
#include <vector>

#include "taggant/tensor.h"

namespace taggant {

// Fixed random feature pyramid used as a perceptual distance: three 3x3 conv
// layers (GELU, 2x average pooling between levels), features normalized to
// unit length over channels at every pixel. The distance sums, over levels,
// the spatial mean of squared normalized-feature differences, then averages
// over the batch. Weights are a pure function of the seed.
class PerceptualDistance {
 public:
  PerceptualDistance(std::int64_t channels, std::uint64_t seed);

  // Normalized features per level for [N,C,H,W] images.
  std::vector<diff::Tensor> Features(const diff::Tensor& images) const;
  // Distance between precomputed reference features and `images`.
  diff::Tensor Loss(const std::vector<diff::Tensor>& reference, const diff::Tensor& images) const;
  diff::Tensor Loss(const diff::Tensor& original, const diff::Tensor& perturbed) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<diff::Tensor> weights_;
};

}  // namespace taggant

#endif  // TAGGANT_PERCEPTUAL_H_
