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

#include "taggant/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "taggant/error.h"
#include "taggant/ops.h"
#include "taggant/rng.h"

namespace taggant {

using diff::Tensor;

std::string ToString(Architecture a) {
  switch (a) {
    case Architecture::kMlp: return "mlp";
    case Architecture::kCnnSmall: return "cnn-small";
    case Architecture::kCnnMedium: return "cnn-medium";
  }
  return "";
}

Architecture ArchitectureFromString(const std::string& s) {
  if (s == "mlp") return Architecture::kMlp;
  if (s == "cnn-small") return Architecture::kCnnSmall;
  if (s == "cnn-medium") return Architecture::kCnnMedium;
  throw ConfigError("unsupported architecture '" + s + "'");
}

std::string ToString(Activation a) {
  switch (a) {
    case Activation::kGelu: return "gelu";
    case Activation::kSoftplus: return "softplus";
    case Activation::kRelu: return "relu";
  }
  return "";
}

Activation ActivationFromString(const std::string& s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "softplus") return Activation::kSoftplus;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unsupported activation '" + s + "'");
}

std::string ToString(LossKind k) {
  return k == LossKind::kCrossEntropy ? "ce" : "bce";
}

LossKind LossKindFromString(const std::string& s) {
  if (s == "ce") return LossKind::kCrossEntropy;
  if (s == "bce") return LossKind::kBinaryCrossEntropy;
  throw ConfigError("unsupported loss kind '" + s + "'");
}

io::Json ToJson(const ModelSpec& spec) {
  return {{"architecture", ToString(spec.architecture)},
          {"input_shape", ToJson(spec.input)},
          {"classes", spec.classes},
          {"seed", spec.seed},
          {"hidden", spec.hidden},
          {"width", spec.width},
          {"activation", ToString(spec.activation)}};
}

ModelSpec ModelSpecFromJson(const io::Json& j) {
  ModelSpec spec;
  if (j.contains("architecture")) spec.architecture = ArchitectureFromString(j["architecture"]);
  if (j.contains("input_shape")) spec.input = ImageShapeFromJson(j["input_shape"]);
  spec.classes = j.value("classes", spec.classes);
  spec.seed = j.value("seed", spec.seed);
  spec.hidden = j.value("hidden", spec.hidden);
  spec.width = j.value("width", spec.width);
  if (j.contains("activation")) spec.activation = ActivationFromString(j["activation"]);
  return spec;
}

void Validate(const ModelSpec& spec) {
  if (spec.classes < 2) throw ConfigError("class count must be at least 2");
  if (spec.input.channels < 1 || spec.input.height < 1 || spec.input.width < 1) {
    throw ConfigError("input dimensions must be positive");
  }
  if (spec.hidden < 1 || spec.width < 1) throw ConfigError("layer widths must be positive");
  if (spec.architecture != Architecture::kMlp &&
      (spec.input.height % 4 != 0 || spec.input.width % 4 != 0)) {
    throw ConfigError("convolutional models need height and width divisible by 4");
  }
}

Tensor Model::AddParam(const std::string& name, diff::Shape shape, std::int64_t fan_in,
                       Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(diff::NumElements(shape));
  for (auto& v : values) v = rng.Uniform(-bound, bound);
  const std::int64_t offset = index_.empty() ? 0 : index_.back().offset + index_.back().length;
  index_.push_back({name, shape, offset, static_cast<std::int64_t>(values.size())});
  params_.push_back(Tensor::FromData(std::move(shape), std::move(values), true));
  return params_.back();
}

Model::Model(const ModelSpec& spec) : spec_(spec) {
  Validate(spec);
  Rng rng(spec.seed);
  const auto C = spec.input.channels;
  const std::int64_t w = spec.width;
  switch (spec.architecture) {
    case Architecture::kMlp: {
      const auto in = spec.input.numel();
      AddParam("fc1.weight", {in, spec.hidden}, in, rng);
      AddParam("fc1.bias", {spec.hidden}, in, rng);
      AddParam("fc2.weight", {spec.hidden, spec.classes}, spec.hidden, rng);
      AddParam("fc2.bias", {spec.classes}, spec.hidden, rng);
      break;
    }
    case Architecture::kCnnSmall: {
      AddParam("conv1.weight", {w, C, 3, 3}, C * 9, rng);
      AddParam("conv1.bias", {w}, C * 9, rng);
      AddParam("conv2.weight", {2 * w, w, 3, 3}, w * 9, rng);
      AddParam("conv2.bias", {2 * w}, w * 9, rng);
      const auto features = feature_dim();
      AddParam("fc.weight", {features, spec.classes}, features, rng);
      AddParam("fc.bias", {spec.classes}, features, rng);
      break;
    }
    case Architecture::kCnnMedium: {
      AddParam("conv1.weight", {w, C, 3, 3}, C * 9, rng);
      AddParam("conv1.bias", {w}, C * 9, rng);
      AddParam("conv2.weight", {w, w, 3, 3}, w * 9, rng);
      AddParam("conv2.bias", {w}, w * 9, rng);
      AddParam("conv3.weight", {2 * w, w, 3, 3}, w * 9, rng);
      AddParam("conv3.bias", {2 * w}, w * 9, rng);
      AddParam("conv4.weight", {2 * w, 2 * w, 3, 3}, 2 * w * 9, rng);
      AddParam("conv4.bias", {2 * w}, 2 * w * 9, rng);
      const auto features = feature_dim();
      AddParam("fc.weight", {features, spec.classes}, features, rng);
      AddParam("fc.bias", {spec.classes}, features, rng);
      break;
    }
  }
}

Model::Model(const Model& other) : spec_(other.spec_), index_(other.index_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(p.Clone());
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::int64_t Model::parameter_count() const {
  return index_.empty() ? 0 : index_.back().offset + index_.back().length;
}

std::vector<double> Model::Flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : params_) flat.insert(flat.end(), p.data().begin(), p.data().end());
  return flat;
}

void Model::Unflatten(std::span<const double> flat) {
  if (static_cast<std::int64_t>(flat.size()) != parameter_count()) {
    throw ConfigError("flat parameter vector has " + std::to_string(flat.size()) +
                      " entries, model has " + std::to_string(parameter_count()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& dst = params_[i].mutable_data();
    std::copy_n(flat.begin() + index_[i].offset, index_[i].length, dst.begin());
  }
}

std::int64_t Model::feature_dim() const {
  switch (spec_.architecture) {
    case Architecture::kMlp:
      return spec_.hidden;
    case Architecture::kCnnSmall:
    case Architecture::kCnnMedium:
      return 2 * spec_.width * (spec_.input.height / 4) * (spec_.input.width / 4);
  }
  return 0;
}

Tensor Model::Activate(const Tensor& x) const {
  switch (spec_.activation) {
    case Activation::kGelu: return diff::Gelu(x);
    case Activation::kSoftplus: return diff::Softplus(x);
    case Activation::kRelu: return diff::Relu(x);
  }
  return x;
}

namespace {

Tensor AsBatch(const Tensor& images, const ImageShape& shape) {
  const diff::Shape single = shape.AsShape();
  if (images.shape() == single) {
    return diff::Reshape(images, {1, shape.channels, shape.height, shape.width});
  }
  if (images.rank() != 4 || images.dim(1) != shape.channels || images.dim(2) != shape.height ||
      images.dim(3) != shape.width) {
    throw ConfigError("model expects images of shape [N," + std::to_string(shape.channels) + "," +
                      std::to_string(shape.height) + "," + std::to_string(shape.width) +
                      "], got " + diff::ShapeString(images.shape()));
  }
  return images;
}

// Maps [0,1] pixels to [-1,1].
Tensor Normalize(const Tensor& x) {
  const auto C = static_cast<std::size_t>(x.dim(1));
  return diff::ChannelAffine(x, std::vector<double>(C, 2.0), std::vector<double>(C, -1.0));
}

}  // namespace

Tensor Model::Features(const Tensor& images) const {
  Tensor x = Normalize(AsBatch(images, spec_.input));
  const auto n = x.dim(0);
  const diff::Conv2dParams same{1, 1};
  switch (spec_.architecture) {
    case Architecture::kMlp: {
      x = diff::Reshape(x, {n, spec_.input.numel()});
      return Activate(diff::AddRowBias(diff::MatMul(x, params_[0]), params_[1]));
    }
    case Architecture::kCnnSmall: {
      x = diff::AvgPool2d(Activate(diff::AddChannelBias(diff::Conv2d(x, params_[0], same), params_[1])), 2);
      x = diff::AvgPool2d(Activate(diff::AddChannelBias(diff::Conv2d(x, params_[2], same), params_[3])), 2);
      return diff::Reshape(x, {n, feature_dim()});
    }
    case Architecture::kCnnMedium: {
      x = Activate(diff::AddChannelBias(diff::Conv2d(x, params_[0], same), params_[1]));
      x = diff::AvgPool2d(Activate(diff::AddChannelBias(diff::Conv2d(x, params_[2], same), params_[3])), 2);
      x = Activate(diff::AddChannelBias(diff::Conv2d(x, params_[4], same), params_[5]));
      x = diff::AvgPool2d(Activate(diff::AddChannelBias(diff::Conv2d(x, params_[6], same), params_[7])), 2);
      return diff::Reshape(x, {n, feature_dim()});
    }
  }
  return x;
}

Tensor Model::Head(const Tensor& features) const {
  const auto k = params_.size();
  return diff::AddRowBias(diff::MatMul(features, params_[k - 2]), params_[k - 1]);
}

Tensor Model::Logits(const Tensor& images) const { return Head(Features(images)); }

Tensor Loss(const Model& model, const Tensor& images, const std::vector<int>& labels,
            LossKind kind) {
  const Tensor logits = model.Logits(images);
  if (static_cast<std::int64_t>(labels.size()) != logits.dim(0)) {
    throw ConfigError("batch has " + std::to_string(logits.dim(0)) + " images but " +
                      std::to_string(labels.size()) + " labels");
  }
  const Tensor targets = diff::OneHot(labels, model.spec().classes);
  if (kind == LossKind::kCrossEntropy) return diff::SoftCrossEntropy(logits, targets);
  return diff::BinaryCrossEntropyWithLogits(logits, targets);
}

Tensor LossWithTargets(const Model& model, const Tensor& images, const Tensor& targets,
                       LossKind kind) {
  const Tensor logits = model.Logits(images);
  if (kind == LossKind::kCrossEntropy) return diff::SoftCrossEntropy(logits, targets);
  return diff::BinaryCrossEntropyWithLogits(logits, targets);
}

Tensor FlattenGrads(const std::vector<Tensor>& grads) {
  std::vector<Tensor> flat;
  flat.reserve(grads.size());
  for (const auto& g : grads) flat.push_back(diff::Reshape(g, {g.numel()}));
  return diff::Concat(flat);
}

Tensor ParamGrad(const Model& model, const Tensor& images, const std::vector<int>& labels,
                 LossKind kind, bool create_graph) {
  const Tensor loss = Loss(model, images, labels, kind);
  return FlattenGrads(diff::Grad(loss, model.parameters(),
                                 {.create_graph = create_graph, .allow_unused = true}));
}

std::vector<int> TopK(std::span<const double> logits, int k) {
  if (k < 1 || k > static_cast<int>(logits.size())) {
    throw ConfigError("k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(logits.size()) + "]");
  }
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
  });
  order.resize(k);
  return order;
}

std::vector<std::vector<int>> PredictTopKBatch(const Model& model, const Tensor& images, int k) {
  if (k < 1 || k > model.spec().classes) {
    throw ConfigError("k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(model.spec().classes) + "]");
  }
  diff::NoGradGuard no_grad;
  const Tensor logits = model.Logits(images);
  const auto classes = logits.dim(1);
  std::vector<std::vector<int>> out;
  for (std::int64_t i = 0; i < logits.dim(0); ++i) {
    out.push_back(TopK(logits.data().subspan(i * classes, classes), k));
  }
  return out;
}

std::vector<int> PredictTopK(const Model& model, const Tensor& image, int k) {
  return PredictTopKBatch(model, image, k).at(0);
}

void SaveModel(const Model& model, const std::filesystem::path& path, const io::Json& extra) {
  io::Json index = io::Json::array();
  for (const auto& slot : model.flat_index()) {
    index.push_back({{"name", slot.name}, {"shape", slot.shape},
                     {"offset", slot.offset}, {"length", slot.length}});
  }
  io::Json header = {{"kind", "model"},
                     {"format_version", kModelFormatVersion},
                     {"spec", ToJson(model.spec())},
                     {"flat_index", index},
                     {"parameter_count", model.parameter_count()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) header[it.key()] = it.value();
  const auto flat = model.Flatten();
  io::WriteContainer(path, header, io::EncodeF64(flat));
}

Model LoadModel(const std::filesystem::path& path) {
  const auto c = io::ReadContainer(path, "model", kModelFormatVersion);
  Model model(ModelSpecFromJson(c.header.at("spec")));
  const auto& index = c.header.at("flat_index");
  if (index.size() != model.flat_index().size()) {
    throw DataIntegrityError(path.string() + ": parameter index does not match architecture");
  }
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& slot = model.flat_index()[i];
    if (index[i].at("name") != slot.name || index[i].at("length") != slot.length) {
      throw DataIntegrityError(path.string() + ": parameter '" + slot.name + "' mismatch");
    }
  }
  model.Unflatten(io::DecodeF64(c.blob));
  return model;
}

}  // namespace taggant
