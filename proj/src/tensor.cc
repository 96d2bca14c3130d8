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

#include "taggant/tensor.h"

#include <malloc.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "taggant/error.h"
#include "taggant/ops.h"
#include "taggant/tape.h"

namespace taggant::diff {
namespace {

thread_local bool g_grad_enabled = true;

// Tensor buffers of a few MB are allocated and freed at a high rate. Keeping
// them on the heap instead of fresh mmap regions avoids a page-fault storm.
const bool g_allocator_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  return true;
}();
std::atomic<std::uint64_t> g_sequence{1};

}  // namespace

std::int64_t NumElements(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ",";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

bool GradEnabled() { return g_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
  g_grad_enabled = enabled;
}

GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

Tensor MakeLeaf(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d < 0) throw ConfigError("negative dimension in shape " + ShapeString(shape));
  }
  if (static_cast<std::int64_t>(data.size()) != NumElements(shape)) {
    throw ConfigError("data length " + std::to_string(data.size()) +
                      " does not match shape " + ShapeString(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(node));
}

Tensor MakeResult(const char* op_name, Shape shape, std::vector<double> data,
                  std::vector<Tensor> inputs, BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite value produced by op '") +
                           op_name + "'");
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
      return t.defined() && t.requires_grad();
    });
    if (any) {
      node->requires_grad = true;
      node->grad_fn = std::make_shared<GradFn>();
      node->grad_fn->name = op_name;
      node->grad_fn->inputs = std::move(inputs);
      node->grad_fn->backward = std::move(backward);
    }
  }
  Tensor out(std::move(node));
  internal::RecordOnActiveTape(out);
  return out;
}

Tensor Tensor::FromData(Shape shape, std::vector<double> data, bool requires_grad) {
  return MakeLeaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  const auto n = NumElements(shape);
  return MakeLeaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  const auto n = NumElements(shape);
  return MakeLeaf(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return MakeLeaf({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ConfigError("use of undefined tensor");
  return node_->shape;
}

std::int64_t Tensor::dim(std::int64_t axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<std::int64_t>(s.size());
  if (axis < 0 || axis >= static_cast<std::int64_t>(s.size())) {
    throw ConfigError("axis out of range for shape " + ShapeString(s));
  }
  return s[axis];
}

std::int64_t Tensor::numel() const { return NumElements(shape()); }

std::span<const double> Tensor::data() const {
  if (!node_) throw ConfigError("use of undefined tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ConfigError("item() on tensor of shape " + ShapeString(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && !node_->grad_fn; }

std::vector<double>& Tensor::mutable_data() {
  if (!node_) throw ConfigError("use of undefined tensor");
  if (node_->grad_fn) throw ConfigError("in-place update of a non-leaf tensor");
  return node_->data;
}

void Tensor::set_requires_grad(bool flag) {
  if (!node_) throw ConfigError("use of undefined tensor");
  if (node_->grad_fn) throw ConfigError("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
}

Tensor Tensor::Detach() const {
  return MakeLeaf(shape(), node_->data, false);
}

Tensor Tensor::Clone() const {
  return MakeLeaf(shape(), node_->data, is_leaf() && requires_grad());
}

std::vector<Tensor> Grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         GradOptions options) {
  if (!output.defined() || output.numel() != 1) {
    throw ConfigError("Grad requires a single-element output, got shape " +
                      (output.defined() ? ShapeString(output.shape()) : "undefined"));
  }
  std::unordered_set<const Node*> targets;
  for (const auto& t : wrt) {
    if (!t.defined()) throw ConfigError("Grad target is undefined");
    targets.insert(t.node());
  }

  // Nodes from which some target is reachable; only these receive adjoints.
  std::unordered_map<const Node*, bool> needed;
  std::vector<const Node*> order;
  {
    struct Frame {
      const Node* node;
      std::size_t next_input;
    };
    std::vector<Frame> stack;
    if (output.requires_grad() || targets.count(output.node())) {
      stack.push_back({output.node(), 0});
      needed[output.node()] = targets.count(output.node()) > 0;
    }
    while (!stack.empty()) {
      Frame& frame = stack.back();
      const Node* node = frame.node;
      const auto& fn = node->grad_fn;
      if (fn && frame.next_input < fn->inputs.size()) {
        const Tensor& in = fn->inputs[frame.next_input++];
        if (!in.defined() || !in.requires_grad()) continue;
        if (needed.find(in.node()) == needed.end()) {
          needed[in.node()] = targets.count(in.node()) > 0;
          stack.push_back({in.node(), 0});
        }
        continue;
      }
      bool is_needed = targets.count(node) > 0;
      if (fn) {
        for (const auto& in : fn->inputs) {
          if (in.defined() && in.requires_grad() && needed[in.node()]) {
            is_needed = true;
          }
        }
      }
      needed[node] = is_needed;
      if (is_needed) order.push_back(node);
      stack.pop_back();
    }
  }
  // Creation order is a valid topological order; process newest first.
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) {
    return a->sequence > b->sequence;
  });

  GradModeGuard mode(options.create_graph);
  std::unordered_map<const Node*, Tensor> adjoint;
  if (!order.empty()) {
    adjoint[output.node()] = Tensor::Full(output.shape(), 1.0);
  }
  for (const Node* node : order) {
    auto it = adjoint.find(node);
    if (it == adjoint.end()) continue;
    if (!node->grad_fn) continue;
    const auto& fn = *node->grad_fn;
    std::vector<bool> needs(fn.inputs.size(), false);
    bool any = false;
    for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
      const Tensor& in = fn.inputs[i];
      needs[i] = in.defined() && in.requires_grad() && needed[in.node()];
      any = any || needs[i];
    }
    if (!any) continue;
    Tensor g = it->second;
    if (!targets.count(node)) adjoint.erase(it);
    std::vector<Tensor> input_grads = fn.backward(g, needs);
    for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
      if (!needs[i]) continue;
      const Tensor& ig = input_grads.at(i);
      if (!ig.defined()) continue;
      const Node* in_node = fn.inputs[i].node();
      if (ig.shape() != in_node->shape) {
        throw ConfigError(std::string("backward of '") + fn.name +
                          "' produced gradient of shape " + ShapeString(ig.shape()) +
                          " for input of shape " + ShapeString(in_node->shape));
      }
      auto slot = adjoint.find(in_node);
      if (slot == adjoint.end()) {
        adjoint.emplace(in_node, ig);
      } else {
        slot->second = Add(slot->second, ig);
      }
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const auto& t : wrt) {
    auto it = adjoint.find(t.node());
    if (it != adjoint.end()) {
      result.push_back(it->second);
    } else if (options.allow_unused) {
      result.push_back(Tensor::Zeros(t.shape()));
    } else {
      throw ConfigError("Grad target of shape " + ShapeString(t.shape()) +
                        " is not reachable from the output");
    }
  }
  return result;
}

}  // namespace taggant::diff
