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

#ifndef TAGGANT_MODEL_H_
#define TAGGANT_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "taggant/dataset.h"
#include "taggant/io.h"
#include "taggant/tensor.h"

namespace taggant {

class Rng;

enum class Architecture { kMlp, kCnnSmall, kCnnMedium };
std::string ToString(Architecture a);
Architecture ArchitectureFromString(const std::string& s);

enum class Activation { kGelu, kSoftplus, kRelu };
std::string ToString(Activation a);
Activation ActivationFromString(const std::string& s);

struct ModelSpec {
  Architecture architecture = Architecture::kCnnSmall;
  ImageShape input;
  int classes = 10;
  std::uint64_t seed = 0;
  int hidden = 64;  // mlp hidden width
  int width = 16;   // first conv layer channels; later layers double it
  Activation activation = Activation::kGelu;
};
io::Json ToJson(const ModelSpec& spec);
ModelSpec ModelSpecFromJson(const io::Json& j);
void Validate(const ModelSpec& spec);

struct ParamSlot {
  std::string name;
  diff::Shape shape;
  std::int64_t offset = 0;
  std::int64_t length = 0;
};

// Small classifier with a flat parameter view. Copies are deep.
class Model {
 public:
  explicit Model(const ModelSpec& spec);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelSpec& spec() const { return spec_; }
  const std::vector<diff::Tensor>& parameters() const { return params_; }
  const std::vector<ParamSlot>& flat_index() const { return index_; }
  std::int64_t parameter_count() const;

  std::vector<double> Flatten() const;
  void Unflatten(std::span<const double> flat);

  // images: [N,C,H,W] or a single [C,H,W]; returns [N,classes].
  diff::Tensor Logits(const diff::Tensor& images) const;
  // Penultimate activations, [N, feature_dim()].
  diff::Tensor Features(const diff::Tensor& images) const;
  std::int64_t feature_dim() const;

 private:
  diff::Tensor AddParam(const std::string& name, diff::Shape shape, std::int64_t fan_in,
                        Rng& rng);
  diff::Tensor Activate(const diff::Tensor& x) const;
  diff::Tensor Head(const diff::Tensor& features) const;

  ModelSpec spec_;
  std::vector<diff::Tensor> params_;
  std::vector<ParamSlot> index_;
};

enum class LossKind { kCrossEntropy, kBinaryCrossEntropy };
std::string ToString(LossKind k);
LossKind LossKindFromString(const std::string& s);

// Mean loss over the batch.
diff::Tensor Loss(const Model& model, const diff::Tensor& images,
                  const std::vector<int>& labels, LossKind kind);
// Same with per-sample target distributions ([N,classes], rows sum to 1).
diff::Tensor LossWithTargets(const Model& model, const diff::Tensor& images,
                             const diff::Tensor& targets, LossKind kind);

// Flat dLoss/dtheta in flat-index order. With create_graph the result stays
// differentiable with respect to the images.
diff::Tensor ParamGrad(const Model& model, const diff::Tensor& images,
                       const std::vector<int>& labels, LossKind kind, bool create_graph);
diff::Tensor FlattenGrads(const std::vector<diff::Tensor>& grads);

// Labels of the k largest logits, descending; ties go to the smaller label.
std::vector<int> TopK(std::span<const double> logits, int k);
std::vector<int> PredictTopK(const Model& model, const diff::Tensor& image, int k);
std::vector<std::vector<int>> PredictTopKBatch(const Model& model, const diff::Tensor& images,
                                               int k);

inline constexpr int kModelFormatVersion = 1;
void SaveModel(const Model& model, const std::filesystem::path& path,
               const io::Json& extra = io::Json::object());
Model LoadModel(const std::filesystem::path& path);

}  // namespace taggant

#endif  // TAGGANT_MODEL_H_
