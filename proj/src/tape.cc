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

#include "taggant/tape.h"

#include "taggant/error.h"

namespace taggant::diff {
namespace {

thread_local Tape* g_active_tape = nullptr;

class ActiveTapeScope {
 public:
  explicit ActiveTapeScope(Tape* tape) : previous_(g_active_tape) { g_active_tape = tape; }
  ~ActiveTapeScope() { g_active_tape = previous_; }

 private:
  Tape* previous_;
};

}  // namespace

void RecordNode(Tape* tape, const Tensor& t) { tape->records_.push_back(t); }

namespace internal {
void RecordOnActiveTape(const Tensor& t) {
  if (g_active_tape != nullptr) RecordNode(g_active_tape, t);
}
}  // namespace internal

Tape::Tape(std::vector<InputSpec> inputs, Program program)
    : inputs_(std::move(inputs)), program_(std::move(program)) {}

Tensor Tape::Forward(const Inputs& inputs) {
  for (const auto& spec : inputs_) {
    auto it = inputs.find(spec.name);
    if (it == inputs.end() || !it->second.defined()) {
      throw ConfigError("tape input '" + spec.name + "' is not bound");
    }
    if (it->second.shape() != spec.shape) {
      throw ConfigError("tape input '" + spec.name + "' has shape " +
                        ShapeString(it->second.shape()) + ", expected " +
                        ShapeString(spec.shape));
    }
  }
  records_.clear();
  ActiveTapeScope scope(this);
  return program_(inputs);
}

}  // namespace taggant::diff
