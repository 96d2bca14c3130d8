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

#include "taggant/stealth.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "taggant/error.h"
#include "taggant/ops.h"

namespace taggant {

namespace {
template <typename T>
double PsnrImpl(std::span<const T> a, std::span<const T> b, double peak) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("PSNR needs equal, non-empty shapes");
  if (!(peak > 0.0)) throw ConfigError("PSNR peak must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sq += d * d;
  }
  if (sq == 0.0) return std::numeric_limits<double>::infinity();
  const double rmse = std::sqrt(sq / static_cast<double>(a.size()));
  return 20.0 * std::log10(peak / rmse);
}
}  // namespace

double Psnr(std::span<const double> a, std::span<const double> b, double peak) {
  return PsnrImpl(a, b, peak);
}

double Psnr(std::span<const float> a, std::span<const float> b, double peak) {
  return PsnrImpl(a, b, peak);
}

FeatureMatrix ExtractFeatures(const Model& model, const Dataset& data,
                              std::span<const std::int64_t> indices) {
  FeatureMatrix f;
  f.rows = static_cast<std::int64_t>(indices.size());
  f.dim = model.feature_dim();
  f.values.reserve(f.rows * f.dim);
  diff::NoGradGuard no_grad;
  constexpr std::size_t kChunk = 250;
  for (std::size_t begin = 0; begin < indices.size(); begin += kChunk) {
    const auto count = std::min(kChunk, indices.size() - begin);
    const auto feats = model.Features(data.Batch(indices.subspan(begin, count)));
    f.values.insert(f.values.end(), feats.data().begin(), feats.data().end());
  }
  return f;
}

FeatureMatrix ExtractFeatures(const Model& model, const Dataset& data) {
  std::vector<std::int64_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return ExtractFeatures(model, data, all);
}

OutlierScores KnnOutlierScores(const FeatureMatrix& f, int k) {
  if (k < 1 || k >= f.rows) {
    throw ConfigError("k_nn=" + std::to_string(k) + " must lie in [1, n-1] for n=" +
                      std::to_string(f.rows));
  }
  OutlierScores out;
  out.scores.resize(f.rows);
  std::vector<double> dist(f.rows - 1);
  for (std::int64_t i = 0; i < f.rows; ++i) {
    const auto a = f.row(i);
    std::int64_t slot = 0;
    for (std::int64_t j = 0; j < f.rows; ++j) {
      if (j == i) continue;
      const auto b = f.row(j);
      double sq = 0.0;
      for (std::int64_t d = 0; d < f.dim; ++d) {
        const double t = a[d] - b[d];
        sq += t * t;
      }
      dist[slot++] = std::sqrt(sq);
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double s = 0.0;
    for (int t = 0; t < k; ++t) s += dist[t];
    out.scores[i] = s / k;
  }
  out.degenerate = std::all_of(out.scores.begin(), out.scores.end(),
                               [](double s) { return s == 0.0; });
  return out;
}

double TaggantDetectionRate(std::span<const double> scores, std::span<const std::int64_t> taggants,
                            std::int64_t top_n) {
  const auto n = static_cast<std::int64_t>(scores.size());
  if (top_n < 0 || top_n > n) throw ConfigError("top_n must lie in [0, sample count]");
  if (taggants.empty()) return 0.0;
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) { return scores[a] > scores[b]; });
  const std::set<std::int64_t> top(order.begin(), order.begin() + top_n);
  std::int64_t found = 0;
  for (auto t : taggants) {
    if (t < 0 || t >= n) throw ConfigError("taggant index out of range");
    found += top.count(t);
  }
  return static_cast<double>(found) / static_cast<double>(taggants.size());
}

io::Json ToJson(const StealthReport& r, bool include_scores) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? io::Json(v) : io::Json("inf"); };
  io::Json j = {{"mean_psnr_db", finite_or_null(r.mean_psnr)},
                {"min_psnr_db", finite_or_null(r.min_psnr)},
                {"signed_images", r.signed_images},
                {"k_nn", r.k_nn},
                {"top_n", r.top_n},
                {"analyzed", r.analyzed},
                {"detection_rate", r.detection_rate},
                {"base_rate", r.base_rate},
                {"degenerate_features", r.degenerate},
                {"flagged", r.flagged}};
  if (include_scores) j["scores"] = r.scores;
  return j;
}

StealthReport AnalyzeStealth(const Model& clean_model, const Dataset& original,
                             const Dataset& modified, const StealthOptions& options) {
  if (original.size() != modified.size() || !(original.shape() == modified.shape())) {
    throw ConfigError("stealth analysis needs the original and modified datasets to align");
  }
  StealthReport r;
  r.k_nn = options.k_nn;
  std::vector<std::int64_t> changed;
  double psnr_sum = 0.0;
  for (std::int64_t i = 0; i < original.size(); ++i) {
    const auto a = original.image(i);
    const auto b = modified.image(i);
    if (std::equal(a.begin(), a.end(), b.begin()) && original.label(i) == modified.label(i)) {
      continue;
    }
    changed.push_back(i);
    const double p = Psnr(a, b);
    r.min_psnr = std::min(r.min_psnr, p);
    psnr_sum += p;
  }
  r.signed_images = static_cast<std::int64_t>(changed.size());
  if (!changed.empty()) r.mean_psnr = psnr_sum / static_cast<double>(changed.size());

  std::vector<std::int64_t> pool;
  if (options.restrict_to_signed_classes && !changed.empty()) {
    std::set<int> classes;
    for (auto i : changed) classes.insert(modified.label(i));
    for (std::int64_t i = 0; i < modified.size(); ++i) {
      if (classes.count(modified.label(i))) pool.push_back(i);
    }
  } else {
    pool.resize(modified.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  r.analyzed = static_cast<std::int64_t>(pool.size());
  r.top_n = static_cast<std::int64_t>(std::llround(options.top_fraction * r.analyzed));
  r.base_rate = r.analyzed ? static_cast<double>(r.top_n) / static_cast<double>(r.analyzed) : 0.0;
  if (changed.empty() || r.analyzed <= options.k_nn) return r;

  const auto features = ExtractFeatures(clean_model, modified, pool);
  const auto scores = KnnOutlierScores(features, options.k_nn);
  r.degenerate = scores.degenerate;
  r.scores = scores.scores;
  // Positions of the modified images within the analyzed pool.
  std::vector<std::int64_t> positions;
  for (std::size_t p = 0; p < pool.size(); ++p) {
    if (std::binary_search(changed.begin(), changed.end(), pool[p])) positions.push_back(p);
  }
  r.detection_rate = TaggantDetectionRate(r.scores, positions, r.top_n);
  std::vector<std::int64_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) { return r.scores[a] > r.scores[b]; });
  for (std::int64_t t = 0; t < r.top_n; ++t) r.flagged.push_back(pool[order[t]]);
  return r;
}

}  // namespace taggant
