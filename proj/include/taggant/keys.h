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

#ifndef TAGGANT_KEYS_H_
#define TAGGANT_KEYS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "taggant/dataset.h"
#include "taggant/io.h"
#include "taggant/tensor.h"

namespace taggant {

struct Key {
  std::vector<double> image;  // [C,H,W], values in [0,1]
  int label = 0;
  std::optional<double> score;  // taggant objective, lower is better
};

// The secret. Carries its own shape and class count so detection needs only
// this file and a model endpoint.
struct KeySet {
  std::vector<Key> keys;
  std::uint64_t seed = 0;
  ImageShape shape;
  int classes = 0;
  io::Json metadata = io::Json::object();

  std::int64_t size() const { return static_cast<std::int64_t>(keys.size()); }
  diff::Tensor Image(std::int64_t i) const;
  std::vector<int> Labels() const;
  bool operator==(const KeySet& other) const;
};

// Pixels and labels come from two separate streams of `seed`, so labels are
// independent of images by construction.
KeySet GenerateKeys(std::int64_t count, const ImageShape& shape, int classes, std::uint64_t seed);

// The m lowest-scoring keys in their original order; ties go to the lower
// index.
KeySet SelectBestKeys(const KeySet& keyset, std::int64_t keep);

inline constexpr int kKeysetFormatVersion = 1;
void SaveKeyset(const KeySet& keyset, const std::filesystem::path& path);
KeySet LoadKeyset(const std::filesystem::path& path);

}  // namespace taggant

#endif  // TAGGANT_KEYS_H_
