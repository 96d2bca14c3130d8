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

#ifndef TAGGANT_ENDPOINT_H_
#define TAGGANT_ENDPOINT_H_

#include <utility>
#include <memory>
#include <string>
#include <vector>

#include "taggant/detector.h"
#include "taggant/io.h"
#include "taggant/model.h"

namespace taggant {

// Wire format for POST /predict: {"image": base64 of little-endian float32
// CHW pixels, "k": int} -> {"labels": [int, ...]} best first.
io::Json EncodePredictRequest(const std::vector<double>& image, int k);
// Returns the decoded pixels and k; throws ConfigError on malformed input.
std::pair<std::vector<double>, int> DecodePredictRequest(const io::Json& request);

struct RemoteOptions {
  double timeout_seconds = 10.0;
  int retries = 3;
  int k_limit = 0;  // 0: trust the keyset's |Y|
};

// HTTP suspect. Transport failures are retried, then raise DetectionError.
class RemoteEndpoint : public SuspectEndpoint {
 public:
  RemoteEndpoint(std::string base_url, RemoteOptions options);
  std::vector<int> TopK(const std::vector<double>& image, const ImageShape& shape,
                        int k) override;
  int k_limit() const override { return options_.k_limit > 0 ? options_.k_limit : 1 << 30; }
  std::string description() const override { return "remote " + base_url_; }

 private:
  std::string base_url_;
  RemoteOptions options_;
};

// HTTP front end for a model, answering POST /predict on a background thread.
class ModelServer {
 public:
  explicit ModelServer(const Model& model);
  ~ModelServer();
  ModelServer(const ModelServer&) = delete;
  ModelServer& operator=(const ModelServer&) = delete;

  // Binds and starts serving; port 0 picks a free port. Returns the port.
  int Start(const std::string& host, int port);
  void Stop();
  // Blocks until Stop() is called from another thread.
  void Wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace taggant

#endif  // TAGGANT_ENDPOINT_H_
