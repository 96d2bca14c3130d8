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

#ifndef TAGGANT_TENSOR_H_
#define TAGGANT_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace taggant::diff {

using Shape = std::vector<std::int64_t>;

std::int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

struct Node;
class Tensor;

// Backward rule of one recorded op. Receives the adjoint of the op output and
// a mask of which inputs need an adjoint; returns one entry per input
// (undefined where not needed). Rules are written with differentiable ops, so
// running them with recording enabled yields differentiable gradients.
using BackwardFn = std::function<std::vector<Tensor>(
    const Tensor& grad_out, const std::vector<bool>& needs_grad)>;

struct GradFn {
  const char* name = "";
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

// Value handle into the computation graph. Copies share the underlying node;
// use Clone() for an independent copy. Shape {} denotes a scalar.
class Tensor {
 public:
  Tensor() = default;

  static Tensor FromData(Shape shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const;
  std::span<const double> data() const;
  double item() const;
  double at(std::int64_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  bool is_leaf() const;
  // Leaf tensors may be updated in place (optimizer steps).
  std::vector<double>& mutable_data();
  void set_requires_grad(bool flag);

  // Same values, no graph history.
  Tensor Detach() const;
  // Deep copy of values and the requires_grad flag of a leaf.
  Tensor Clone() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor MakeResult(const char*, Shape, std::vector<double>,
                           std::vector<Tensor>, BackwardFn);
  friend Tensor MakeLeaf(Shape, std::vector<double>, bool);

  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::shared_ptr<GradFn> grad_fn;
  std::uint64_t sequence = 0;
};

Tensor MakeLeaf(Shape shape, std::vector<double> data, bool requires_grad);

// Creates an op output. Records history only when recording is enabled and
// some input requires grad. Throws NumericalError on non-finite output.
Tensor MakeResult(const char* op_name, Shape shape, std::vector<double> data,
                  std::vector<Tensor> inputs, BackwardFn backward);

// Recording switch, per thread.
bool GradEnabled();

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

struct GradOptions {
  // Gradients are themselves recorded, so a scalar function of them can be
  // differentiated again.
  bool create_graph = false;
  // Unreachable targets get a zero gradient instead of an error.
  bool allow_unused = false;
};

// Reverse-mode gradient of a single-element tensor with respect to `wrt`.
std::vector<Tensor> Grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         GradOptions options = {});

}  // namespace taggant::diff

#endif  // TAGGANT_TENSOR_H_
