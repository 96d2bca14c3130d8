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

#ifndef TAGGANT_DATASET_H_
#define TAGGANT_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "taggant/io.h"
#include "taggant/tensor.h"

namespace taggant {

struct ImageShape {
  std::int64_t channels = 3;
  std::int64_t height = 32;
  std::int64_t width = 32;

  std::int64_t numel() const { return channels * height * width; }
  diff::Shape AsShape() const { return {channels, height, width}; }
  bool operator==(const ImageShape&) const = default;
};

io::Json ToJson(const ImageShape& s);
ImageShape ImageShapeFromJson(const io::Json& j);

enum class Provenance { kClean, kSigned, kCanary, kTransparency };
std::string ToString(Provenance p);
Provenance ProvenanceFromString(const std::string& s);

// Labeled images in [0,1], channel-major. Pixels are stored as float32, the
// on-disk precision; computation converts to double.
class Dataset {
 public:
  Dataset() = default;
  Dataset(ImageShape shape, int classes);

  void Add(std::span<const float> image, int label);

  std::int64_t size() const { return static_cast<std::int64_t>(labels_.size()); }
  const ImageShape& shape() const { return shape_; }
  int classes() const { return classes_; }
  const std::vector<int>& labels() const { return labels_; }
  int label(std::int64_t i) const { return labels_.at(i); }
  void set_label(std::int64_t i, int label);
  std::span<const float> image(std::int64_t i) const;
  std::span<float> mutable_image(std::int64_t i);
  std::span<const float> pixels() const { return pixels_; }

  // [C,H,W] and [n,C,H,W] views in double precision.
  diff::Tensor ImageTensor(std::int64_t i) const;
  std::vector<double> ImageValues(std::int64_t i) const;
  diff::Tensor Batch(std::span<const std::int64_t> indices) const;

  std::vector<std::int64_t> ClassCounts() const;
  std::vector<std::int64_t> IndicesOfClass(int label) const;

  Provenance provenance() const { return provenance_; }
  void set_provenance(Provenance p) { provenance_ = p; }

 private:
  ImageShape shape_;
  int classes_ = 0;
  std::vector<float> pixels_;
  std::vector<int> labels_;
  Provenance provenance_ = Provenance::kClean;
};

// Directory layout: manifest.json, images.f32 (little-endian float32),
// labels.i32 (little-endian int32). The manifest records counts and SHA-256
// checksums of both blobs.
inline constexpr int kDatasetFormatVersion = 1;
void SaveDataset(const Dataset& dataset, const std::filesystem::path& dir,
                 const io::Json& extra = io::Json::object());
Dataset LoadDataset(const std::filesystem::path& dir);
io::Json LoadDatasetManifest(const std::filesystem::path& dir);
bool IsDatasetDirectory(const std::filesystem::path& dir);

struct SyntheticParams {
  int classes = 20;
  std::int64_t train_count = 5000;
  std::int64_t val_count = 1000;
  ImageShape shape;
  std::uint64_t seed = 0;
  double noise_std = 0.05;
};
io::Json ToJson(const SyntheticParams& p);
SyntheticParams SyntheticParamsFromJson(const io::Json& j);

struct DatasetSplit {
  Dataset train;
  Dataset val;
};

// Class-conditioned textured shapes: the class picks the shape and a
// texture/colour style; position, size, rotation, colours and pixel noise
// vary per sample.
DatasetSplit MakeSyntheticDataset(const SyntheticParams& params);

// Reads <dir>/<label>/*.f32 files, each one raw little-endian float32 image of
// the given shape. Labels are the integer directory names.
Dataset IngestDirectory(const std::filesystem::path& dir, ImageShape shape, int classes);

}  // namespace taggant

#endif  // TAGGANT_DATASET_H_
