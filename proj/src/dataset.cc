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

#include "taggant/dataset.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "taggant/error.h"
#include "taggant/rng.h"

namespace taggant {

namespace fs = std::filesystem;

io::Json ToJson(const ImageShape& s) { return io::Json::array({s.channels, s.height, s.width}); }

ImageShape ImageShapeFromJson(const io::Json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("image shape must be [C,H,W]");
  ImageShape s{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
  if (s.channels < 1 || s.height < 1 || s.width < 1) {
    throw ConfigError("image dimensions must be positive");
  }
  return s;
}

std::string ToString(Provenance p) {
  switch (p) {
    case Provenance::kClean: return "clean";
    case Provenance::kSigned: return "signed";
    case Provenance::kCanary: return "canary";
    case Provenance::kTransparency: return "transparency";
  }
  return "clean";
}

Provenance ProvenanceFromString(const std::string& s) {
  if (s == "clean") return Provenance::kClean;
  if (s == "signed") return Provenance::kSigned;
  if (s == "canary") return Provenance::kCanary;
  if (s == "transparency") return Provenance::kTransparency;
  throw DataIntegrityError("unknown provenance value '" + s + "'");
}

Dataset::Dataset(ImageShape shape, int classes) : shape_(shape), classes_(classes) {
  if (classes < 2) throw ConfigError("a dataset needs at least 2 classes");
}

void Dataset::Add(std::span<const float> image, int label) {
  if (static_cast<std::int64_t>(image.size()) != shape_.numel()) {
    throw ConfigError("image has " + std::to_string(image.size()) + " values, expected " +
                      std::to_string(shape_.numel()));
  }
  if (label < 0 || label >= classes_) {
    throw ConfigError("label " + std::to_string(label) + " out of range");
  }
  pixels_.insert(pixels_.end(), image.begin(), image.end());
  labels_.push_back(label);
}

void Dataset::set_label(std::int64_t i, int label) {
  if (label < 0 || label >= classes_) throw ConfigError("label out of range");
  labels_.at(i) = label;
}

std::span<const float> Dataset::image(std::int64_t i) const {
  if (i < 0 || i >= size()) throw ConfigError("image index " + std::to_string(i) + " out of range");
  return std::span<const float>(pixels_).subspan(i * shape_.numel(), shape_.numel());
}

std::span<float> Dataset::mutable_image(std::int64_t i) {
  if (i < 0 || i >= size()) throw ConfigError("image index " + std::to_string(i) + " out of range");
  return std::span<float>(pixels_).subspan(i * shape_.numel(), shape_.numel());
}

std::vector<double> Dataset::ImageValues(std::int64_t i) const {
  auto img = image(i);
  return std::vector<double>(img.begin(), img.end());
}

diff::Tensor Dataset::ImageTensor(std::int64_t i) const {
  return diff::Tensor::FromData(shape_.AsShape(), ImageValues(i));
}

diff::Tensor Dataset::Batch(std::span<const std::int64_t> indices) const {
  std::vector<double> values;
  values.reserve(indices.size() * shape_.numel());
  for (auto i : indices) {
    auto img = image(i);
    values.insert(values.end(), img.begin(), img.end());
  }
  return diff::Tensor::FromData(
      {static_cast<std::int64_t>(indices.size()), shape_.channels, shape_.height, shape_.width},
      std::move(values));
}

std::vector<std::int64_t> Dataset::ClassCounts() const {
  std::vector<std::int64_t> counts(classes_, 0);
  for (int l : labels_) ++counts[l];
  return counts;
}

std::vector<std::int64_t> Dataset::IndicesOfClass(int label) const {
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < size(); ++i)
    if (labels_[i] == label) out.push_back(i);
  return out;
}

void SaveDataset(const Dataset& dataset, const fs::path& dir, const io::Json& extra) {
  fs::create_directories(dir);
  const io::Bytes images = io::EncodeF32(dataset.pixels());
  std::vector<std::int32_t> labels(dataset.labels().begin(), dataset.labels().end());
  const io::Bytes label_bytes = io::EncodeI32(labels);
  io::Json manifest = {
      {"kind", "dataset"},
      {"format_version", kDatasetFormatVersion},
      {"n", dataset.size()},
      {"shape", ToJson(dataset.shape())},
      {"classes", dataset.classes()},
      {"class_counts", dataset.ClassCounts()},
      {"provenance", ToString(dataset.provenance())},
      {"images_file", "images.f32"},
      {"images_sha256", io::Sha256Hex(images)},
      {"labels_file", "labels.i32"},
      {"labels_sha256", io::Sha256Hex(label_bytes)},
  };
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  io::WriteBytes(dir / "images.f32", images);
  io::WriteBytes(dir / "labels.i32", label_bytes);
  io::WriteJson(dir / "manifest.json", manifest);
}

bool IsDatasetDirectory(const fs::path& dir) {
  const auto manifest = dir / "manifest.json";
  if (!fs::is_regular_file(manifest)) return false;
  try {
    return io::ReadJson(manifest).value("kind", "") == "dataset";
  } catch (const Error&) {
    return false;
  }
}

io::Json LoadDatasetManifest(const fs::path& dir) {
  io::Json manifest;
  try {
    manifest = io::Json::parse(io::ReadText(dir / "manifest.json"));
  } catch (const io::Json::exception& e) {
    throw DataIntegrityError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("kind", "") != "dataset") {
    throw DataIntegrityError(dir.string() + " is not a dataset directory");
  }
  const int version = manifest.value("format_version", -1);
  if (version != kDatasetFormatVersion) {
    throw VersionError("dataset format version " + std::to_string(version) +
                       " is not supported");
  }
  return manifest;
}

Dataset LoadDataset(const fs::path& dir) {
  const io::Json manifest = LoadDatasetManifest(dir);
  const ImageShape shape = ImageShapeFromJson(manifest.at("shape"));
  const int classes = manifest.at("classes").get<int>();
  const auto n = manifest.at("n").get<std::int64_t>();
  const io::Bytes images = io::ReadBytes(dir / manifest.value("images_file", "images.f32"));
  const io::Bytes labels = io::ReadBytes(dir / manifest.value("labels_file", "labels.i32"));
  if (io::Sha256Hex(images) != manifest.value("images_sha256", "")) {
    throw ChecksumError(dir.string() + ": image blob checksum mismatch");
  }
  if (io::Sha256Hex(labels) != manifest.value("labels_sha256", "")) {
    throw ChecksumError(dir.string() + ": label blob checksum mismatch");
  }
  const auto pixels = io::DecodeF32(images);
  const auto label_values = io::DecodeI32(labels);
  if (static_cast<std::int64_t>(label_values.size()) != n ||
      static_cast<std::int64_t>(pixels.size()) != n * shape.numel()) {
    throw DataIntegrityError(dir.string() + ": blob sizes disagree with manifest");
  }
  Dataset ds(shape, classes);
  for (std::int64_t i = 0; i < n; ++i) {
    ds.Add(std::span<const float>(pixels).subspan(i * shape.numel(), shape.numel()),
           label_values[i]);
  }
  if (manifest.contains("class_counts") &&
      manifest["class_counts"].get<std::vector<std::int64_t>>() != ds.ClassCounts()) {
    throw DataIntegrityError(dir.string() + ": class counts disagree with labels");
  }
  ds.set_provenance(ProvenanceFromString(manifest.value("provenance", "clean")));
  return ds;
}

io::Json ToJson(const SyntheticParams& p) {
  return {{"classes", p.classes},       {"train_count", p.train_count},
          {"val_count", p.val_count},   {"shape", ToJson(p.shape)},
          {"seed", p.seed},             {"noise_std", p.noise_std}};
}

SyntheticParams SyntheticParamsFromJson(const io::Json& j) {
  SyntheticParams p;
  p.classes = j.value("classes", p.classes);
  p.train_count = j.value("train_count", p.train_count);
  p.val_count = j.value("val_count", p.val_count);
  if (j.contains("shape")) p.shape = ImageShapeFromJson(j["shape"]);
  p.seed = j.value("seed", p.seed);
  p.noise_std = j.value("noise_std", p.noise_std);
  return p;
}

namespace {

constexpr int kShapeKinds = 5;

// Signed "inside" test in shape-local coordinates (unit radius).
bool InsideShape(int kind, double u, double v) {
  switch (kind) {
    case 0:  // disk
      return u * u + v * v <= 1.0;
    case 1:  // square
      return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
    case 2:  // triangle
      return v >= -0.7 && v <= 0.9 && std::abs(u) <= 0.6 * (0.9 - v);
    case 3: {  // ring
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.36;
    }
    default:  // cross
      return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) ||
             (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
  }
}

std::vector<float> RenderSample(int label, int classes, const ImageShape& shape, double noise,
                                Rng& rng) {
  const int kind = label % kShapeKinds;
  const int styles = (classes + kShapeKinds - 1) / kShapeKinds;
  const int style = label / kShapeKinds;
  const double H = static_cast<double>(shape.height), W = static_cast<double>(shape.width);
  const double size = std::min(H, W);

  // Style: stripe orientation plus a foreground hue.
  const double angle = std::numbers::pi * style / std::max(styles, 1) +
                       rng.Uniform(-0.15, 0.15);
  const double freq = rng.Uniform(0.12, 0.22);
  const double phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  const double hue = 2.0 * std::numbers::pi * style / std::max(styles, 1) + rng.Uniform(-0.3, 0.3);
  double fg[3], bg[3];
  for (int c = 0; c < 3; ++c) {
    fg[c] = 0.55 + 0.35 * std::cos(hue + 2.0 * std::numbers::pi * c / 3.0) + rng.Uniform(-0.08, 0.08);
    bg[c] = rng.Uniform(0.25, 0.55);
  }
  const double amp = rng.Uniform(0.08, 0.18);
  const double cy = rng.Uniform(0.35, 0.65) * H, cx = rng.Uniform(0.35, 0.65) * W;
  const double radius = rng.Uniform(0.2, 0.32) * size;
  const double rot = rng.Uniform(-0.5, 0.5);
  const double cr = std::cos(rot), sr = std::sin(rot);

  std::vector<float> img(shape.numel());
  const auto plane = shape.height * shape.width;
  for (std::int64_t y = 0; y < shape.height; ++y) {
    for (std::int64_t x = 0; x < shape.width; ++x) {
      const double dy = (y + 0.5 - cy) / radius, dx = (x + 0.5 - cx) / radius;
      const double u = cr * dx - sr * dy, v = sr * dx + cr * dy;
      const bool inside = InsideShape(kind, u, v);
      const double stripe =
          amp * std::sin(2.0 * std::numbers::pi * freq *
                             (x * std::cos(angle) + y * std::sin(angle)) + phase);
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = inside ? fg[c] : bg[c] + stripe;
      for (std::int64_t c = 0; c < shape.channels; ++c) {
        double value = shape.channels == 3
                           ? rgb[c]
                           : 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        value += noise * rng.Normal();
        img[c * plane + y * shape.width + x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  }
  return img;
}

Dataset RenderSplit(const SyntheticParams& p, std::int64_t count, std::uint64_t stream) {
  Dataset ds(p.shape, p.classes);
  std::vector<int> labels(count);
  for (std::int64_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % p.classes);
  Rng order = Rng::Stream(p.seed, stream);
  for (std::int64_t i = count - 1; i > 0; --i) {
    std::swap(labels[i], labels[order.Below(static_cast<std::uint64_t>(i) + 1)]);
  }
  Rng pixels = Rng::Stream(p.seed, stream + 1);
  for (std::int64_t i = 0; i < count; ++i) {
    ds.Add(RenderSample(labels[i], p.classes, p.shape, p.noise_std, pixels), labels[i]);
  }
  return ds;
}

}  // namespace

DatasetSplit MakeSyntheticDataset(const SyntheticParams& params) {
  if (params.classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (params.train_count < 1 || params.val_count < 0) {
    throw ConfigError("synthetic dataset sizes must be positive");
  }
  if (params.shape.channels != 1 && params.shape.channels != 3) {
    throw ConfigError("synthetic images must have 1 or 3 channels");
  }
  return {RenderSplit(params, params.train_count, 100), RenderSplit(params, params.val_count, 200)};
}

Dataset IngestDirectory(const fs::path& dir, ImageShape shape, int classes) {
  if (!fs::is_directory(dir)) throw ConfigError("cannot read directory " + dir.string());
  std::vector<std::pair<int, fs::path>> label_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    int label;
    try {
      std::size_t used = 0;
      label = std::stoi(name, &used);
      if (used != name.size()) continue;
    } catch (const std::exception&) {
      continue;
    }
    label_dirs.emplace_back(label, entry.path());
  }
  std::sort(label_dirs.begin(), label_dirs.end());
  Dataset ds(shape, classes);
  for (const auto& [label, path] : label_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".f32") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto values = io::DecodeF32(io::ReadBytes(f));
      if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
        throw DataIntegrityError(f.string() + ": expected " + std::to_string(shape.numel()) +
                                 " float32 values");
      }
      for (float v : values) {
        if (!(v >= 0.0f && v <= 1.0f)) {
          throw DataIntegrityError(f.string() + ": pixel values must lie in [0,1]");
        }
      }
      ds.Add(values, label);
    }
  }
  if (ds.size() == 0) throw DataIntegrityError(dir.string() + ": no images found");
  return ds;
}

}  // namespace taggant
