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

#ifndef TAGGANT_TAPE_H_
#define TAGGANT_TAPE_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "taggant/tensor.h"

namespace taggant::diff {

// A named-input program whose evaluation records every op, in creation order,
// so intermediate values stay available for inspection and backward passes.
class Tape {
 public:
  struct InputSpec {
    std::string name;
    Shape shape;
  };
  using Inputs = std::map<std::string, Tensor>;
  using Program = std::function<Tensor(const Inputs&)>;

  Tape(std::vector<InputSpec> inputs, Program program);

  // Evaluates the program. Every declared input must be bound with its
  // declared shape. Intermediate records are replaced on each call.
  Tensor Forward(const Inputs& inputs);

  // Op outputs of the last Forward, in topological (creation) order.
  const std::vector<Tensor>& records() const { return records_; }
  const std::vector<InputSpec>& inputs() const { return inputs_; }

 private:
  friend void RecordNode(Tape* tape, const Tensor& t);

  std::vector<InputSpec> inputs_;
  Program program_;
  std::vector<Tensor> records_;
};

namespace internal {
void RecordOnActiveTape(const Tensor& t);
}  // namespace internal

}  // namespace taggant::diff

#endif  // TAGGANT_TAPE_H_
