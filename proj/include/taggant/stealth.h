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

#ifndef TAGGANT_STEALTH_H_
#define TAGGANT_STEALTH_H_

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "taggant/dataset.h"
#include "taggant/io.h"
#include "taggant/model.h"

namespace taggant {

// 20 log10(peak / RMSE); +infinity for identical images.
double Psnr(std::span<const double> original, std::span<const double> modified, double peak = 1.0);
double Psnr(std::span<const float> original, std::span<const float> modified, double peak = 1.0);

// Row-major [n, dim] feature matrix.
struct FeatureMatrix {
  std::int64_t rows = 0;
  std::int64_t dim = 0;
  std::vector<double> values;
  std::span<const double> row(std::int64_t i) const {
    return {values.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

// Penultimate activations of a frozen model.
FeatureMatrix ExtractFeatures(const Model& model, const Dataset& data,
                              std::span<const std::int64_t> indices);
FeatureMatrix ExtractFeatures(const Model& model, const Dataset& data);

struct OutlierScores {
  std::vector<double> scores;
  bool degenerate = false;  // all rows identical
};

// Mean Euclidean distance to the k nearest other rows. Exact brute force;
// squared distances accumulate in index order.
OutlierScores KnnOutlierScores(const FeatureMatrix& features, int k);

// Fraction of `taggants` among the top_n highest scores; ties go to the lower
// index.
double TaggantDetectionRate(std::span<const double> scores,
                            std::span<const std::int64_t> taggants, std::int64_t top_n);

struct StealthReport {
  double mean_psnr = std::numeric_limits<double>::infinity();
  double min_psnr = std::numeric_limits<double>::infinity();
  std::int64_t signed_images = 0;
  int k_nn = 0;
  std::int64_t top_n = 0;
  std::int64_t analyzed = 0;
  double detection_rate = 0.0;
  double base_rate = 0.0;  // top_n / analyzed, the rate of a random ranking
  bool degenerate = false;
  std::vector<double> scores;
  std::vector<std::int64_t> flagged;  // dataset indices of the top_n
};
io::Json ToJson(const StealthReport& report, bool include_scores = false);

struct StealthOptions {
  int k_nn = 5;
  double top_fraction = 0.02;
  // Analyze only the classes that contain signed images.
  bool restrict_to_signed_classes = true;
};

// PSNR over modified images and k-NN outlier detection of them, with
// features from the clean model.
StealthReport AnalyzeStealth(const Model& clean_model, const Dataset& original,
                             const Dataset& modified, const StealthOptions& options);

}  // namespace taggant

#endif  // TAGGANT_STEALTH_H_
