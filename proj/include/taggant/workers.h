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

#ifndef TAGGANT_WORKERS_H_
#define TAGGANT_WORKERS_H_

#include <cstdint>
#include <functional>

namespace taggant {

inline constexpr const char* kWorkersEnv = "TAGGANT_WORKERS";

// Pool size from TAGGANT_WORKERS (default 1). Invalid values are a config error.
int WorkerCount();

// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write results
// into slot i, so output order never depends on scheduling. The first
// exception (lowest index) is rethrown after all tasks finish.
void ParallelFor(std::int64_t n, int workers, const std::function<void(std::int64_t)>& fn);

}  // namespace taggant

#endif  // TAGGANT_WORKERS_H_
