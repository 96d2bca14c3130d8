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

#ifndef TAGGANT_EXPERIMENT_H_
#define TAGGANT_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "taggant/dataset.h"
#include "taggant/detector.h"
#include "taggant/io.h"
#include "taggant/signer.h"
#include "taggant/stealth.h"
#include "taggant/trainer.h"

namespace taggant {

// Ways of marking the dataset that Bob trains on.
enum class Method {
  kClean,
  kTaggants,
  kTaggantsZeroEpsilon,    // taggant pipeline with epsilon = 0
  kNaiveCanary,
  kTransparency,           // fixed gamma
  kTransparencyMatched,    // gamma chosen to match the taggants' mean PSNR
  kTestImageKeys,          // taggants whose keys are held-out images
};
std::string ToString(Method m);
Method MethodFromString(const std::string& s);

struct DatasetSource {
  // "synthetic" or "directory".
  std::string kind = "synthetic";
  SyntheticParams synthetic;
  std::filesystem::path train_dir;
  std::filesystem::path val_dir;
};

struct KeysetParams {
  std::int64_t generate = 20;
  std::int64_t keep = 10;
  std::uint64_t seed = 1;
  // Short crafting run that scores the generated keys before selection.
  int screen_steps = 50;
};

struct DetectionParams {
  int k = 3;
  double alpha = 0.01;
};

struct ExperimentConfig {
  DatasetSource dataset;
  TrainConfig alice;           // Alice's surrogate
  CraftConfig craft;
  double budget = 0.02;
  std::uint64_t plan_seed = 2;
  double transparency_gamma = 0.2;
  std::vector<TrainConfig> bob;  // one entry per repeated training
  KeysetParams keys;
  DetectionParams detection;
  StealthOptions stealth;
  std::vector<Method> methods;
};
void Validate(const ExperimentConfig& config);
io::Json ToJson(const ExperimentConfig& config);
// Accepts "bob": {"base": {...}, "seeds": [...]} or "bob": [{...}, ...].
ExperimentConfig ExperimentConfigFromJson(const io::Json& j);

// Separates Bob's side of the run from Alice's secrets. Bob-side reads and
// writes are checked against the secret roots; keyset writes are refused
// inside dataset directories.
class PathPolicy {
 public:
  void AddSecretRoot(const std::filesystem::path& root);
  // Throws ConfigError if `path` lies under a secret root.
  void CheckBobAccess(const std::filesystem::path& path) const;
  const std::vector<std::filesystem::path>& secret_roots() const { return roots_; }

 private:
  std::vector<std::filesystem::path> roots_;
};
// Throws ConfigError when `path` would place a keyset inside a dataset
// directory (one holding a dataset manifest), or inside a parent of one.
void CheckKeysetDestination(const std::filesystem::path& path);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
};
Summary Summarize(const std::vector<double>& values);

struct MethodRow {
  Method method = Method::kClean;
  std::vector<double> validation_accuracy;  // per Bob run
  Summary accuracy;
  bool has_keys = false;  // false for the clean row
  std::optional<DetectionReport> top1;
  std::optional<DetectionReport> topk;
  Summary top1_accuracy;
  Summary topk_accuracy;
  std::optional<double> mean_psnr;
  std::optional<double> min_psnr;
  std::optional<double> gamma;
  std::optional<StealthReport> stealth;
};

struct ExperimentReport {
  std::string config_hash;
  double alice_accuracy = 0.0;
  std::int64_t signing_set_size = 0;
  std::vector<double> key_scores;  // crafted objective per kept key
  std::vector<MethodRow> rows;
  // Taggant keys probed against the clean Bob models.
  std::optional<DetectionReport> clean_control;
  const MethodRow* Find(Method m) const;
};
io::Json ToJson(const ExperimentReport& report);
// Fixed-width table for people.
std::string RenderTable(const ExperimentReport& report);

struct RunOptions {
  std::filesystem::path out_dir;
  int workers = 1;
  bool verbose = false;
};

// Runs every configured cell. Model input shapes and class counts are taken
// from the data. Each cell result is persisted under
// out_dir/cells and reused on a rerun with the same config hash. Writes
// report.json and report.txt (reproducible) and timings.json (wall clock).
ExperimentReport RunExperiment(const ExperimentConfig& config, const RunOptions& options);

}  // namespace taggant

#endif  // TAGGANT_EXPERIMENT_H_
