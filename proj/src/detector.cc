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

#include "taggant/detector.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "taggant/error.h"
#include "taggant/stats.h"

namespace taggant {

std::vector<int> ModelEndpoint::TopK(const std::vector<double>& image, const ImageShape& shape,
                                     int k) {
  if (!(shape == model_.spec().input)) {
    throw ConfigError("key image shape does not match the model input shape");
  }
  return PredictTopK(model_, diff::Tensor::FromData(shape.AsShape(), image), k);
}

std::vector<int> RandomEndpoint::TopK(const std::vector<double>&, const ImageShape&, int k) {
  // Partial Fisher-Yates.
  std::vector<int> labels(classes_);
  std::iota(labels.begin(), labels.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng_.Below(classes_ - i));
    std::swap(labels[i], labels[j]);
  }
  labels.resize(k);
  return labels;
}

ProbeResult Probe(SuspectEndpoint& endpoint, const KeySet& keyset, int k) {
  if (k < 1 || k > keyset.classes) {
    throw ConfigError("k=" + std::to_string(k) + " outside [1, |Y|=" +
                      std::to_string(keyset.classes) + "]");
  }
  if (k > endpoint.k_limit()) {
    throw ConfigError("k=" + std::to_string(k) + " exceeds the endpoint limit " +
                      std::to_string(endpoint.k_limit()));
  }
  if (endpoint.classes() != 0 && endpoint.classes() != keyset.classes) {
    throw ConfigError("class count mismatch: keyset has |Y|=" + std::to_string(keyset.classes) +
                      ", suspect model has |Y|=" + std::to_string(endpoint.classes()));
  }
  ProbeResult result;
  for (const auto& key : keyset.keys) {
    auto labels = endpoint.TopK(key.image, keyset.shape, k);
    if (static_cast<int>(labels.size()) > k) {
      throw DetectionError("endpoint returned " + std::to_string(labels.size()) +
                           " labels for k=" + std::to_string(k));
    }
    std::set<int> seen;
    for (int l : labels) {
      if (l < 0 || l >= keyset.classes || !seen.insert(l).second) {
        throw DetectionError("endpoint returned an invalid or duplicate label " +
                             std::to_string(l));
      }
    }
    if (seen.count(key.label)) ++result.hits;
    result.responses.push_back(std::move(labels));
  }
  return result;
}

io::Json ToJson(const DetectionReport& r) {
  io::Json runs = io::Json::array();
  for (std::size_t i = 0; i < r.hits.size(); ++i) {
    io::Json run = {{"hits", r.hits[i]},
                    {"top_k_accuracy", r.top_k_accuracy(i)},
                    {"log10_p", r.log10_p[i]}};
    if (i < r.endpoints.size()) run["endpoint"] = r.endpoints[i];
    if (i < r.responses.size()) run["responses"] = r.responses[i];
    runs.push_back(run);
  }
  return {{"K", r.K},
          {"k", r.k},
          {"classes", r.classes},
          {"alpha", r.alpha},
          {"runs", runs},
          {"single_run_log10_p", r.log10_p.empty() ? 0.0 : r.log10_p.front()},
          {"combined_log10_p", r.combined_log10_p},
          {"combination", r.hits.size() > 1 ? "repeated-training protocol (Fisher)"
                                            : "single run"},
          {"decision", r.reject_null ? "reject H0: suspect was trained on the signed data"
                                     : "accept H0"},
          {"reject_null", r.reject_null},
          {"transcript_sha256", r.transcript_sha256}};
}

DetectionReport ReportFromHits(const std::vector<std::int64_t>& hits, std::int64_t K, int k,
                               int classes, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (hits.empty()) throw ConfigError("detection needs at least one run");
  DetectionReport r;
  r.K = K;
  r.k = k;
  r.classes = classes;
  r.alpha = alpha;
  r.hits = hits;
  for (auto h : hits) r.log10_p.push_back(stats::BinomialLog10PValue(h, K, k, classes));
  r.combined_log10_p = stats::FisherCombineLog10(r.log10_p);
  r.reject_null = r.combined_log10_p < std::log10(alpha);
  return r;
}

DetectionReport Detect(const std::vector<SuspectEndpoint*>& endpoints, const KeySet& keyset,
                       int k, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (endpoints.empty()) throw ConfigError("detection needs at least one endpoint");
  if (k >= keyset.classes) throw ConfigError("k must be smaller than |Y| for a valid test");
  std::vector<std::int64_t> hits;
  std::vector<std::vector<std::vector<int>>> responses;
  std::vector<std::string> names;
  for (auto* e : endpoints) {
    auto probe = Probe(*e, keyset, k);
    hits.push_back(probe.hits);
    responses.push_back(std::move(probe.responses));
    names.push_back(e->description());
  }
  DetectionReport r = ReportFromHits(hits, keyset.size(), k, keyset.classes, alpha);
  r.responses = std::move(responses);
  r.endpoints = std::move(names);
  r.transcript_sha256 = io::Sha256Hex(io::Json({{"k", k}, {"responses", r.responses}}).dump());
  return r;
}

}  // namespace taggant
