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

#include "taggant/keys.h"

#include <algorithm>
#include <numeric>

#include "taggant/error.h"
#include "taggant/rng.h"

namespace taggant {

namespace {
constexpr std::uint64_t kPixelStream = 1;
constexpr std::uint64_t kLabelStream = 2;
}  // namespace

diff::Tensor KeySet::Image(std::int64_t i) const {
  return diff::Tensor::FromData(shape.AsShape(), keys.at(i).image);
}

std::vector<int> KeySet::Labels() const {
  std::vector<int> labels;
  for (const auto& k : keys) labels.push_back(k.label);
  return labels;
}

bool KeySet::operator==(const KeySet& o) const {
  if (seed != o.seed || !(shape == o.shape) || classes != o.classes || size() != o.size()) {
    return false;
  }
  for (std::int64_t i = 0; i < size(); ++i) {
    const auto& a = keys[i];
    const auto& b = o.keys[i];
    if (a.label != b.label || a.image != b.image || a.score != b.score) return false;
  }
  return true;
}

KeySet GenerateKeys(std::int64_t count, const ImageShape& shape, int classes,
                    std::uint64_t seed) {
  if (count < 1) throw ConfigError("key count must be at least 1");
  if (classes < 2) throw ConfigError("class count must be at least 2");
  KeySet ks;
  ks.seed = seed;
  ks.shape = shape;
  ks.classes = classes;
  Rng pixels = Rng::Stream(seed, kPixelStream);
  Rng labels = Rng::Stream(seed, kLabelStream);
  ks.keys.resize(count);
  for (auto& key : ks.keys) {
    key.image.resize(shape.numel());
    // 24-bit grid: every key pixel is exactly representable in the float32
    // dataset format, so verbatim insertion is lossless.
    for (auto& p : key.image) p = static_cast<double>(pixels.NextU64() >> 40) * 0x1.0p-24;
    key.label = static_cast<int>(labels.Below(classes));
  }
  return ks;
}

KeySet SelectBestKeys(const KeySet& keyset, std::int64_t keep) {
  if (keep < 1 || keep > keyset.size()) {
    throw ConfigError("cannot keep " + std::to_string(keep) + " of " +
                      std::to_string(keyset.size()) + " keys");
  }
  for (std::int64_t i = 0; i < keyset.size(); ++i) {
    if (!keyset.keys[i].score) {
      throw ConfigError("key " + std::to_string(i) + " has no objective score");
    }
  }
  std::vector<std::int64_t> order(keyset.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return *keyset.keys[a].score < *keyset.keys[b].score;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  KeySet out = keyset;
  out.keys.clear();
  io::Json origin = io::Json::array();
  for (auto i : order) {
    out.keys.push_back(keyset.keys[i]);
    origin.push_back(i);
  }
  out.metadata["selected_from"] = keyset.size();
  out.metadata["selected_indices"] = origin;
  return out;
}

void SaveKeyset(const KeySet& ks, const std::filesystem::path& path) {
  io::Json labels = io::Json::array();
  io::Json scores = io::Json::array();
  std::vector<double> pixels;
  pixels.reserve(ks.size() * ks.shape.numel());
  for (const auto& k : ks.keys) {
    labels.push_back(k.label);
    scores.push_back(k.score ? io::Json(*k.score) : io::Json(nullptr));
    pixels.insert(pixels.end(), k.image.begin(), k.image.end());
  }
  // Scores go in the blob too: JSON text does not round-trip every double.
  std::vector<double> score_values;
  for (const auto& k : ks.keys) score_values.push_back(k.score.value_or(0.0));
  pixels.insert(pixels.end(), score_values.begin(), score_values.end());
  io::Json header = {{"kind", "keyset"},
                     {"format_version", kKeysetFormatVersion},
                     {"K", ks.size()},
                     {"image_shape", ToJson(ks.shape)},
                     {"classes", ks.classes},
                     {"seed", ks.seed},
                     {"labels", labels},
                     {"scores", scores},
                     {"metadata", ks.metadata}};
  io::WriteContainer(path, header, io::EncodeF64(pixels));
}

KeySet LoadKeyset(const std::filesystem::path& path) {
  const auto c = io::ReadContainer(path, "keyset", kKeysetFormatVersion);
  KeySet ks;
  try {
    ks.shape = ImageShapeFromJson(c.header.at("image_shape"));
    ks.classes = c.header.at("classes").get<int>();
    ks.seed = c.header.at("seed").get<std::uint64_t>();
    ks.metadata = c.header.value("metadata", io::Json::object());
    const auto K = c.header.at("K").get<std::int64_t>();
    const auto& labels = c.header.at("labels");
    const auto& scores = c.header.at("scores");
    const auto values = io::DecodeF64(c.blob);
    const auto n = ks.shape.numel();
    if (static_cast<std::int64_t>(values.size()) != K * n + K ||
        static_cast<std::int64_t>(labels.size()) != K ||
        static_cast<std::int64_t>(scores.size()) != K) {
      throw DataIntegrityError(path.string() + ": keyset sizes are inconsistent");
    }
    for (std::int64_t i = 0; i < K; ++i) {
      Key key;
      key.image.assign(values.begin() + i * n, values.begin() + (i + 1) * n);
      key.label = labels[i].get<int>();
      if (key.label < 0 || key.label >= ks.classes) {
        throw DataIntegrityError(path.string() + ": key label out of range");
      }
      if (!scores[i].is_null()) key.score = values[K * n + i];
      ks.keys.push_back(std::move(key));
    }
  } catch (const io::Json::exception& e) {
    throw DataIntegrityError(path.string() + ": malformed keyset header: " + e.what());
  }
  return ks;
}

}  // namespace taggant
