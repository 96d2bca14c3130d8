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

#include "taggant/endpoint.h"

#include <chrono>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "taggant/error.h"

namespace taggant {

io::Json EncodePredictRequest(const std::vector<double>& image, int k) {
  std::vector<float> pixels(image.begin(), image.end());
  return {{"image", io::Base64Encode(io::EncodeF32(pixels))}, {"k", k}};
}

std::pair<std::vector<double>, int> DecodePredictRequest(const io::Json& request) {
  if (!request.is_object() || !request.contains("image") || !request.contains("k") ||
      !request["image"].is_string() || !request["k"].is_number_integer()) {
    throw ConfigError("predict request needs a base64 'image' and an integer 'k'");
  }
  const auto bytes = io::Base64Decode(request["image"].get<std::string>());
  const auto pixels = io::DecodeF32(bytes);
  return {std::vector<double>(pixels.begin(), pixels.end()), request["k"].get<int>()};
}

RemoteEndpoint::RemoteEndpoint(std::string base_url, RemoteOptions options)
    : base_url_(std::move(base_url)), options_(options) {
  if (options_.retries < 0 || !(options_.timeout_seconds > 0.0)) {
    throw ConfigError("remote endpoint needs a positive timeout and non-negative retries");
  }
}

std::vector<int> RemoteEndpoint::TopK(const std::vector<double>& image, const ImageShape&,
                                      int k) {
  httplib::Client client(base_url_);
  const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  const std::string body = EncodePredictRequest(image, k).dump();
  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    auto res = client.Post("/predict", body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
    } else if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      io::Json reply = io::Json::parse(res->body, nullptr, false);
      if (reply.is_discarded() || !reply.contains("labels") || !reply["labels"].is_array()) {
        throw DetectionError("malformed response from " + base_url_);
      }
      std::vector<int> labels;
      for (const auto& l : reply["labels"]) {
        if (!l.is_number_integer()) throw DetectionError("non-integer label from " + base_url_);
        labels.push_back(l.get<int>());
      }
      return labels;
    }
    if (attempt < options_.retries) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
    }
  }
  throw DetectionError("endpoint " + base_url_ + " failed after " +
                       std::to_string(options_.retries + 1) + " attempts: " + last_error);
}

struct ModelServer::Impl {
  const Model& model;
  httplib::Server server;
  // Handlers build autodiff graphs on the shared model; one request at a time.
  std::mutex mu;
  std::thread thread;
  explicit Impl(const Model& m) : model(m) {}
};

ModelServer::ModelServer(const Model& model) : impl_(std::make_unique<Impl>(model)) {
  impl_->server.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto [pixels, k] = DecodePredictRequest(io::Json::parse(req.body));
      const auto& shape = impl_->model.spec().input;
      if (static_cast<std::int64_t>(pixels.size()) != shape.numel()) {
        throw ConfigError("image has " + std::to_string(pixels.size()) + " values, expected " +
                          std::to_string(shape.numel()));
      }
      std::lock_guard<std::mutex> lock(impl_->mu);
      const auto labels =
          PredictTopK(impl_->model, diff::Tensor::FromData(shape.AsShape(), pixels), k);
      res.set_content(io::Json({{"labels", labels}}).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(io::Json({{"error", e.what()}}).dump(), "application/json");
    }
  });
}

ModelServer::~ModelServer() { Stop(); }

int ModelServer::Start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw DetectionError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  return bound;
}

void ModelServer::Stop() {
  impl_->server.stop();
  Wait();
}

void ModelServer::Wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace taggant
