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

#ifndef TAGGANT_DETECTOR_H_
#define TAGGANT_DETECTOR_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "taggant/io.h"
#include "taggant/keys.h"
#include "taggant/model.h"
#include "taggant/rng.h"

namespace taggant {

// Black-box suspect: answers top-k queries on images. Implementations see
// only the image and k.
class SuspectEndpoint {
 public:
  virtual ~SuspectEndpoint() = default;
  // image is [C,H,W] in [0,1]; returns up to k labels, best first.
  virtual std::vector<int> TopK(const std::vector<double>& image, const ImageShape& shape,
                                int k) = 0;
  // Largest k the endpoint will answer.
  virtual int k_limit() const = 0;
  // Class count if the endpoint advertises it, otherwise 0.
  virtual int classes() const { return 0; }
  virtual std::string description() const = 0;
};

class ModelEndpoint : public SuspectEndpoint {
 public:
  explicit ModelEndpoint(const Model& model) : model_(model) {}
  std::vector<int> TopK(const std::vector<double>& image, const ImageShape& shape,
                        int k) override;
  int k_limit() const override { return model_.spec().classes; }
  int classes() const override { return model_.spec().classes; }
  std::string description() const override { return "in-process model"; }

 private:
  const Model& model_;
};

// Honest simulated suspect: a uniformly random ranking per query, drawn
// independently of the image.
class RandomEndpoint : public SuspectEndpoint {
 public:
  RandomEndpoint(int classes, std::uint64_t seed) : classes_(classes), rng_(seed) {}
  std::vector<int> TopK(const std::vector<double>& image, const ImageShape& shape,
                        int k) override;
  int k_limit() const override { return classes_; }
  int classes() const override { return classes_; }
  std::string description() const override { return "random ranking"; }

 private:
  int classes_;
  Rng rng_;
};

struct ProbeResult {
  std::int64_t hits = 0;
  std::vector<std::vector<int>> responses;  // one per key, in key order
};

// Queries every key image once and counts keys whose label is in the top-k.
// Malformed responses raise DetectionError.
ProbeResult Probe(SuspectEndpoint& endpoint, const KeySet& keyset, int k);

struct DetectionReport {
  std::int64_t K = 0;
  int k = 0;
  int classes = 0;
  double alpha = 0.01;
  std::vector<std::int64_t> hits;  // per run
  std::vector<double> log10_p;     // per run
  double combined_log10_p = 0.0;
  bool reject_null = false;
  std::string transcript_sha256;
  std::vector<std::string> endpoints;
  std::vector<std::vector<std::vector<int>>> responses;  // [run][key]

  double top_k_accuracy(std::size_t run) const {
    return K ? static_cast<double>(hits.at(run)) / static_cast<double>(K) : 0.0;
  }
};
io::Json ToJson(const DetectionReport& report);

// Probes each endpoint (one per training run), then combines the per-run
// p-values with Fisher's method and tests at level alpha (reject iff p < alpha).
DetectionReport Detect(const std::vector<SuspectEndpoint*>& endpoints, const KeySet& keyset,
                       int k, double alpha);

// Combined statistics from already-collected hit counts.
DetectionReport ReportFromHits(const std::vector<std::int64_t>& hits, std::int64_t K, int k,
                               int classes, double alpha);

}  // namespace taggant

#endif  // TAGGANT_DETECTOR_H_
