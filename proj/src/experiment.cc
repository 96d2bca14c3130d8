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

#include "taggant/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "taggant/error.h"
#include "taggant/keys.h"
#include "taggant/model.h"
#include "taggant/workers.h"

namespace taggant {
namespace fs = std::filesystem;
using io::Json;

namespace {

const std::vector<std::pair<Method, const char*>>& MethodNames() {
  static const std::vector<std::pair<Method, const char*>> names = {
      {Method::kClean, "clean"},
      {Method::kTaggants, "taggants"},
      {Method::kTaggantsZeroEpsilon, "taggants-eps0"},
      {Method::kNaiveCanary, "naive-canary"},
      {Method::kTransparency, "transparency"},
      {Method::kTransparencyMatched, "transparency-matched"},
      {Method::kTestImageKeys, "test-image-keys"},
  };
  return names;
}

Json StealthOptionsToJson(const StealthOptions& o) {
  return {{"k_nn", o.k_nn},
          {"top_fraction", o.top_fraction},
          {"restrict_to_signed_classes", o.restrict_to_signed_classes}};
}

StealthOptions StealthOptionsFromJson(const Json& j) {
  StealthOptions o;
  o.k_nn = j.value("k_nn", o.k_nn);
  o.top_fraction = j.value("top_fraction", o.top_fraction);
  o.restrict_to_signed_classes =
      j.value("restrict_to_signed_classes", o.restrict_to_signed_classes);
  return o;
}

// Methods whose Bob datasets are built from a crafted taggant signature.
bool UsesTaggantSignature(Method m) {
  return m == Method::kTaggants || m == Method::kTransparencyMatched;
}

bool IsUnder(const fs::path& path, const fs::path& root) {
  const fs::path p = fs::weakly_canonical(fs::absolute(path));
  const fs::path r = fs::weakly_canonical(fs::absolute(root));
  auto pi = p.begin();
  for (auto ri = r.begin(); ri != r.end(); ++ri, ++pi) {
    if (ri->empty()) continue;  // trailing separator
    if (pi == p.end() || *pi != *ri) return false;
  }
  return true;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Reads `path` when it exists and carries the current config hash.
std::optional<Json> ReadStage(const fs::path& path, const std::string& hash) {
  if (!fs::exists(path)) return std::nullopt;
  Json j = io::ReadJson(path);
  if (j.value("config_hash", std::string()) != hash) return std::nullopt;
  return j;
}

std::string FormatPercent(const Summary& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f +- %.1f", 100.0 * s.mean, 100.0 * s.stddev);
  return buf;
}

std::string FormatNumber(double v, const char* fmt) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

Json SummaryToJson(const Summary& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

Json OptionalNumber(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

struct CellResult {
  TrainReport train;
  std::int64_t hits1 = 0;
  std::int64_t hitsk = 0;
  std::vector<std::vector<int>> responses;  // top-k response per key
};

Json CellToJson(const CellResult& c, const std::string& hash, Method m, std::size_t run) {
  return {{"config_hash", hash},   {"method", ToString(m)},
          {"run", run},            {"train", ToJson(c.train)},
          {"hits_top1", c.hits1},  {"hits_topk", c.hitsk},
          {"responses", c.responses}};
}

CellResult CellFromJson(const Json& j) {
  CellResult c;
  const Json& t = j.at("train");
  c.train.validation_accuracy = t.at("validation_accuracy").get<double>();
  c.train.epoch_loss = t.at("epoch_loss").get<std::vector<double>>();
  c.train.steps = t.at("steps").get<std::int64_t>();
  c.train.seed = t.at("seed").get<std::uint64_t>();
  c.hits1 = j.at("hits_top1").get<std::int64_t>();
  c.hitsk = j.at("hits_topk").get<std::int64_t>();
  c.responses = j.at("responses").get<std::vector<std::vector<int>>>();
  return c;
}

// Probes with top-k responses; top-1 hits follow from the first label.
void ProbeInto(const Model& model, const KeySet& keys, int k, CellResult& cell) {
  ModelEndpoint endpoint(model);
  ProbeResult probe = Probe(endpoint, keys, k);
  cell.hitsk = probe.hits;
  cell.hits1 = 0;
  for (std::size_t i = 0; i < probe.responses.size(); ++i) {
    if (!probe.responses[i].empty() && probe.responses[i][0] == keys.keys[i].label) {
      ++cell.hits1;
    }
  }
  cell.responses = std::move(probe.responses);
}

DetectionReport BuildReport(const std::vector<const CellResult*>& cells, const KeySet& keys,
                            int k, double alpha, bool top1) {
  std::vector<std::int64_t> hits;
  std::vector<std::vector<std::vector<int>>> responses;
  for (const auto* c : cells) {
    hits.push_back(top1 ? c->hits1 : c->hitsk);
    if (top1) {
      std::vector<std::vector<int>> first;
      for (const auto& r : c->responses) first.push_back({r.empty() ? -1 : r[0]});
      responses.push_back(std::move(first));
    } else {
      responses.push_back(c->responses);
    }
  }
  const int kk = top1 ? 1 : k;
  DetectionReport r = ReportFromHits(hits, keys.size(), kk, keys.classes, alpha);
  r.responses = std::move(responses);
  r.endpoints.assign(cells.size(), "in-process model");
  r.transcript_sha256 = io::Sha256Hex(Json({{"k", kk}, {"responses", r.responses}}).dump());
  return r;
}

double MeanSignedPsnr(const Dataset& original, const Dataset& modified,
                      const std::vector<std::int64_t>& indices) {
  double sum = 0.0;
  for (auto i : indices) sum += Psnr(original.image(i), modified.image(i));
  return indices.empty() ? 0.0 : sum / static_cast<double>(indices.size());
}

// Smallest-error gamma whose mean PSNR over the signing set matches `target`.
// Mean PSNR falls monotonically as gamma grows.
double MatchTransparencyGamma(const Dataset& train, const KeySet& keys, const SigningPlan& plan,
                              double target) {
  const auto indices = plan.AllIndices();
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Dataset d = BaselineTransparency(train, keys, plan, mid);
    if (MeanSignedPsnr(train, d, indices) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace

std::string ToString(Method m) {
  for (const auto& [method, name] : MethodNames()) {
    if (method == m) return name;
  }
  throw ConfigError("unknown method");
}

Method MethodFromString(const std::string& s) {
  for (const auto& [method, name] : MethodNames()) {
    if (s == name) return method;
  }
  throw ConfigError("unknown method '" + s + "'");
}

void Validate(const ExperimentConfig& c) {
  if (c.dataset.kind != "synthetic" && c.dataset.kind != "directory") {
    throw ConfigError("dataset.kind must be 'synthetic' or 'directory'");
  }
  Validate(c.alice);
  Validate(c.craft);
  if (c.bob.empty()) throw ConfigError("at least one Bob run is required");
  for (const auto& b : c.bob) Validate(b);
  if (!(c.budget > 0.0 && c.budget <= 1.0)) throw ConfigError("budget must lie in (0,1]");
  if (!(c.transparency_gamma >= 0.0 && c.transparency_gamma <= 1.0)) {
    throw ConfigError("transparency_gamma must lie in [0,1]");
  }
  if (c.keys.generate < 1 || c.keys.keep < 1 || c.keys.keep > c.keys.generate) {
    throw ConfigError("keys: need 1 <= keep <= generate");
  }
  if (c.keys.keep < c.keys.generate && c.keys.screen_steps < 0) {
    throw ConfigError("keys.screen_steps must be non-negative");
  }
  if (c.detection.k < 1) throw ConfigError("detection.k must be at least 1");
  if (!(c.detection.alpha > 0.0 && c.detection.alpha < 1.0)) {
    throw ConfigError("detection.alpha must lie in (0,1)");
  }
  if (c.stealth.k_nn < 1) throw ConfigError("stealth.k_nn must be at least 1");
  if (!(c.stealth.top_fraction > 0.0 && c.stealth.top_fraction <= 1.0)) {
    throw ConfigError("stealth.top_fraction must lie in (0,1]");
  }
  if (c.methods.empty()) throw ConfigError("no methods configured");
}

Json ToJson(const ExperimentConfig& c) {
  Json dataset = {{"kind", c.dataset.kind}};
  if (c.dataset.kind == "synthetic") {
    dataset["synthetic"] = ToJson(c.dataset.synthetic);
  } else {
    dataset["train_dir"] = c.dataset.train_dir.generic_string();
    dataset["val_dir"] = c.dataset.val_dir.generic_string();
  }
  Json bob = Json::array();
  for (const auto& b : c.bob) bob.push_back(ToJson(b));
  Json methods = Json::array();
  for (auto m : c.methods) methods.push_back(ToString(m));
  return {{"dataset", dataset},
          {"alice", ToJson(c.alice)},
          {"craft", ToJson(c.craft)},
          {"budget", c.budget},
          {"plan_seed", c.plan_seed},
          {"transparency_gamma", c.transparency_gamma},
          {"bob", bob},
          {"keys",
           {{"generate", c.keys.generate},
            {"keep", c.keys.keep},
            {"seed", c.keys.seed},
            {"screen_steps", c.keys.screen_steps}}},
          {"detection", {{"k", c.detection.k}, {"alpha", c.detection.alpha}}},
          {"stealth", StealthOptionsToJson(c.stealth)},
          {"methods", methods}};
}

ExperimentConfig ExperimentConfigFromJson(const Json& j) {
  try {
    ExperimentConfig c;
    if (j.contains("dataset")) {
      const Json& d = j.at("dataset");
      c.dataset.kind = d.value("kind", c.dataset.kind);
      if (d.contains("synthetic")) c.dataset.synthetic = SyntheticParamsFromJson(d.at("synthetic"));
      c.dataset.train_dir = d.value("train_dir", std::string());
      c.dataset.val_dir = d.value("val_dir", std::string());
    }
    if (j.contains("alice")) c.alice = TrainConfigFromJson(j.at("alice"));
    if (j.contains("craft")) c.craft = CraftConfigFromJson(j.at("craft"));
    c.budget = j.value("budget", c.budget);
    c.plan_seed = j.value("plan_seed", c.plan_seed);
    c.transparency_gamma = j.value("transparency_gamma", c.transparency_gamma);
    if (j.contains("bob")) {
      const Json& b = j.at("bob");
      if (b.is_array()) {
        for (const auto& e : b) c.bob.push_back(TrainConfigFromJson(e));
      } else {
        const TrainConfig base = TrainConfigFromJson(b.value("base", Json::object()));
        for (const auto& s : b.at("seeds")) {
          TrainConfig t = base;
          t.seed = s.get<std::uint64_t>();
          t.model.seed = t.seed;
          c.bob.push_back(t);
        }
      }
    }
    if (j.contains("keys")) {
      const Json& k = j.at("keys");
      c.keys.generate = k.value("generate", c.keys.generate);
      c.keys.keep = k.value("keep", c.keys.keep);
      c.keys.seed = k.value("seed", c.keys.seed);
      c.keys.screen_steps = k.value("screen_steps", c.keys.screen_steps);
    }
    if (j.contains("detection")) {
      c.detection.k = j.at("detection").value("k", c.detection.k);
      c.detection.alpha = j.at("detection").value("alpha", c.detection.alpha);
    }
    if (j.contains("stealth")) c.stealth = StealthOptionsFromJson(j.at("stealth"));
    if (j.contains("methods")) {
      for (const auto& m : j.at("methods")) c.methods.push_back(MethodFromString(m.get<std::string>()));
    } else {
      c.methods = {Method::kClean, Method::kTaggants, Method::kNaiveCanary,
                   Method::kTransparency, Method::kTransparencyMatched, Method::kTestImageKeys};
    }
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

void PathPolicy::AddSecretRoot(const fs::path& root) { roots_.push_back(root); }

void PathPolicy::CheckBobAccess(const fs::path& path) const {
  for (const auto& r : roots_) {
    if (IsUnder(path, r)) {
      throw ConfigError("path policy: Bob's side may not access " + path.generic_string() +
                        " (secret root " + r.generic_string() + ")");
    }
  }
}

void CheckKeysetDestination(const fs::path& path) {
  fs::path dir = fs::absolute(path).parent_path();
  for (fs::path p = dir; !p.empty(); p = p.parent_path()) {
    if (IsDatasetDirectory(p)) {
      throw ConfigError("refusing to write a keyset inside dataset directory " +
                        p.generic_string());
    }
    if (p == p.parent_path()) break;
  }
  // A dataset directory nested below the destination would be published
  // together with the secret.
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_directory() && IsDatasetDirectory(e.path())) {
        throw ConfigError("refusing to write a keyset next to dataset directory " +
                          e.path().generic_string());
      }
    }
  }
}

Summary Summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

const MethodRow* ExperimentReport::Find(Method m) const {
  for (const auto& r : rows) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

Json ToJson(const ExperimentReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json row = {{"method", ToString(r.method)},
                {"validation_accuracy", r.validation_accuracy},
                {"accuracy", SummaryToJson(r.accuracy)},
                {"mean_psnr", OptionalNumber(r.mean_psnr)},
                {"min_psnr", OptionalNumber(r.min_psnr)},
                {"gamma", r.gamma ? Json(*r.gamma) : Json(nullptr)}};
    if (r.has_keys) {
      row["top1_accuracy"] = SummaryToJson(r.top1_accuracy);
      row["topk_accuracy"] = SummaryToJson(r.topk_accuracy);
      row["top1"] = ToJson(*r.top1);
      row["topk"] = ToJson(*r.topk);
    } else {
      row["top1_accuracy"] = nullptr;
      row["topk_accuracy"] = nullptr;
    }
    row["stealth"] = r.stealth ? ToJson(*r.stealth) : Json(nullptr);
    rows.push_back(row);
  }
  return {{"config_hash", report.config_hash},
          {"alice_accuracy", report.alice_accuracy},
          {"signing_set_size", report.signing_set_size},
          {"key_scores", report.key_scores},
          {"rows", rows},
          {"clean_control",
           report.clean_control ? ToJson(*report.clean_control) : Json(nullptr)}};
}

std::string RenderTable(const ExperimentReport& report) {
  int k = 0;
  for (const auto& r : report.rows) {
    if (r.topk) k = r.topk->k;
  }
  std::ostringstream out;
  char line[512];
  const std::string topk = "Top-" + std::to_string(k) + " keys %";
  std::snprintf(line, sizeof(line), "%-22s %-16s %-16s %-10s %-16s %-10s %-8s\n", "Method",
                "Val. acc. %", "Top-1 keys %", "log10 p", topk.c_str(), "log10 p", "PSNR");
  out << line;
  out << std::string(100, '-') << "\n";
  for (const auto& r : report.rows) {
    const std::string psnr = r.mean_psnr ? FormatNumber(*r.mean_psnr, "%.1f") : "-";
    if (r.has_keys) {
      std::snprintf(line, sizeof(line), "%-22s %-16s %-16s %-10s %-16s %-10s %-8s\n",
                    ToString(r.method).c_str(), FormatPercent(r.accuracy).c_str(),
                    FormatPercent(r.top1_accuracy).c_str(),
                    FormatNumber(r.top1->combined_log10_p, "%.1f").c_str(),
                    FormatPercent(r.topk_accuracy).c_str(),
                    FormatNumber(r.topk->combined_log10_p, "%.1f").c_str(), psnr.c_str());
    } else {
      std::snprintf(line, sizeof(line), "%-22s %-16s %-16s %-10s %-16s %-10s %-8s\n",
                    ToString(r.method).c_str(), FormatPercent(r.accuracy).c_str(), "-", "-",
                    "-", "-", psnr.c_str());
    }
    out << line;
  }
  out << "\n";
  std::snprintf(line, sizeof(line), "surrogate accuracy %.1f %%, signing set %lld images\n",
                100.0 * report.alice_accuracy, static_cast<long long>(report.signing_set_size));
  out << line;
  if (report.clean_control) {
    std::snprintf(line, sizeof(line),
                  "clean control: taggant keys on clean models, combined log10 p = %.2f (%s)\n",
                  report.clean_control->combined_log10_p,
                  report.clean_control->reject_null ? "reject H0" : "accept H0");
    out << line;
  }
  for (const auto& r : report.rows) {
    if (!r.stealth) continue;
    std::snprintf(line, sizeof(line),
                  "%s: k-NN detection rate at top %lld of %lld = %.3f (base rate %.3f)\n",
                  ToString(r.method).c_str(), static_cast<long long>(r.stealth->top_n),
                  static_cast<long long>(r.stealth->analyzed), r.stealth->detection_rate,
                  r.stealth->base_rate);
    out << line;
  }
  out << "log10 p values combine the Bob runs with Fisher's method "
         "(repeated-training protocol).\n";
  return out.str();
}

ExperimentReport RunExperiment(const ExperimentConfig& config, const RunOptions& options) {
  Validate(config);
  const Json config_json = ToJson(config);
  const std::string hash = io::ConfigHash(config_json);
  const fs::path out = options.out_dir;
  const fs::path secret = out / "secret";
  const fs::path cells_dir = out / "cells";
  const fs::path bob_dir = out / "bob";
  for (const auto& d : {out, secret, cells_dir, bob_dir, out / "alice"}) fs::create_directories(d);
  PathPolicy policy;
  policy.AddSecretRoot(secret);

  Json timings = Json::object();
  auto log = [&](const std::string& msg) {
    if (options.verbose) std::cerr << "[experiment] " << msg << std::endl;
  };
  io::WriteJson(out / "config.json", {{"config_hash", hash}, {"config", config_json}});
  // Each stage is keyed by the settings it depends on, so adding a method or
  // a Bob run to a finished experiment reuses the surrogate, the signature
  // and the existing cells.
  const std::string alice_hash = io::ConfigHash(
      Json{{"dataset", config_json["dataset"]}, {"alice", config_json["alice"]}});
  const std::string keys_hash = io::ConfigHash(Json{{"alice", alice_hash},
                                                    {"craft", config_json["craft"]},
                                                    {"budget", config_json["budget"]},
                                                    {"plan_seed", config_json["plan_seed"]},
                                                    {"keys", config_json["keys"]}});
  auto model_hash = [&](Method m, std::size_t run) {
    Json j = {{"keys", keys_hash}, {"method", ToString(m)}, {"bob", config_json["bob"][run]}};
    if (m == Method::kTransparency) j["gamma"] = config_json["transparency_gamma"];
    return io::ConfigHash(j);
  };
  auto cell_hash = [&](Method m, std::size_t run) {
    return io::ConfigHash(
        Json{{"model", model_hash(m, run)}, {"detection", config_json["detection"]}});
  };

  // Data.
  Stopwatch sw;
  DatasetSplit data;
  if (config.dataset.kind == "synthetic") {
    data = MakeSyntheticDataset(config.dataset.synthetic);
  } else {
    data.train = LoadDataset(config.dataset.train_dir);
    data.val = LoadDataset(config.dataset.val_dir);
  }
  timings["data"] = sw.Seconds();
  // Model input shape and class count always follow the data.
  auto fit = [&](TrainConfig t) {
    t.model.input = data.train.shape();
    t.model.classes = data.train.classes();
    return t;
  };
  const TrainConfig alice_config = fit(config.alice);
  std::vector<TrainConfig> bob_configs;
  for (const auto& b : config.bob) bob_configs.push_back(fit(b));

  // Alice's surrogate.
  sw = Stopwatch();
  const fs::path alice_model_path = out / "alice" / "model.bin";
  const fs::path alice_stage = out / "alice" / "stage.json";
  Model alice(alice_config.model);
  double alice_accuracy = 0.0;
  if (auto stage = ReadStage(alice_stage, alice_hash); stage && fs::exists(alice_model_path)) {
    alice = LoadModel(alice_model_path);
    alice_accuracy = stage->at("validation_accuracy").get<double>();
    log("surrogate loaded from cache");
  } else {
    log("training surrogate");
    auto [model, report] = Train(data.train, data.val, alice_config);
    alice = std::move(model);
    alice_accuracy = report.validation_accuracy;
    SaveModel(alice, alice_model_path, {{"config_hash", alice_hash}});
    Json stage_json = ToJson(report);
    stage_json["config_hash"] = alice_hash;
    io::WriteJson(alice_stage, stage_json);
  }
  timings["alice"] = sw.Seconds();

  auto has = [&](Method m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };
  const bool need_taggants = std::any_of(config.methods.begin(), config.methods.end(), [](Method m) {
    return UsesTaggantSignature(m) || m == Method::kClean || m == Method::kNaiveCanary ||
           m == Method::kTransparency || m == Method::kTaggantsZeroEpsilon;
  });
  const int workers = options.workers;

  // Keys and taggant signature. Both live under the secret root.
  sw = Stopwatch();
  const fs::path keyset_path = secret / "keyset.bin";
  const fs::path signature_path = secret / "signature.bin";
  const fs::path key_stage = secret / "stage.json";
  KeySet keys;
  Signature signature;
  if (need_taggants) {
    if (ReadStage(key_stage, keys_hash) && fs::exists(keyset_path) && fs::exists(signature_path)) {
      keys = LoadKeyset(keyset_path);
      signature = LoadSignature(signature_path);
      log("keys and signature loaded from cache");
    } else {
      KeySet generated = GenerateKeys(config.keys.generate, data.train.shape(),
                                      data.train.classes(), config.keys.seed);
      if (config.keys.keep < config.keys.generate) {
        log("screening " + std::to_string(generated.size()) + " keys");
        CraftConfig screen = config.craft;
        screen.steps = config.keys.screen_steps;
        screen.restarts = 1;
        const SigningPlan plan =
            SelectSigningSet(data.train, generated, config.budget, config.plan_seed);
        CraftSignature(alice, generated, data.train, plan, screen, workers);
        keys = SelectBestKeys(generated, config.keys.keep);
      } else {
        keys = generated;
      }
      log("crafting " + std::to_string(keys.size()) + " keys");
      const SigningPlan plan = SelectSigningSet(data.train, keys, config.budget, config.plan_seed);
      signature = CraftSignature(alice, keys, data.train, plan, config.craft, workers);
      CheckKeysetDestination(keyset_path);
      SaveKeyset(keys, keyset_path);
      SaveSignature(signature, signature_path);
      io::WriteJson(key_stage, {{"config_hash", keys_hash}});
    }
  }
  timings["craft"] = sw.Seconds();

  // Taggants with keys drawn from held-out images.
  sw = Stopwatch();
  KeySet test_keys;
  Signature test_signature;
  if (has(Method::kTestImageKeys)) {
    const fs::path tk_path = secret / "test_keyset.bin";
    const fs::path ts_path = secret / "test_signature.bin";
    const fs::path stage = secret / "test_stage.json";
    if (ReadStage(stage, keys_hash) && fs::exists(tk_path) && fs::exists(ts_path)) {
      test_keys = LoadKeyset(tk_path);
      test_signature = LoadSignature(ts_path);
    } else {
      log("crafting test-image keys");
      test_keys = TestImageKeys(data.val, config.keys.keep, config.keys.seed ^ 0x7e57);
      const SigningPlan plan =
          SelectSigningSet(data.train, test_keys, config.budget, config.plan_seed);
      test_signature = CraftSignature(alice, test_keys, data.train, plan, config.craft, workers);
      CheckKeysetDestination(tk_path);
      SaveKeyset(test_keys, tk_path);
      SaveSignature(test_signature, ts_path);
      io::WriteJson(stage, {{"config_hash", keys_hash}});
    }
  }
  timings["craft_test_image_keys"] = sw.Seconds();

  // Bob's datasets, one per method.
  sw = Stopwatch();
  std::map<Method, Dataset> datasets;
  std::map<Method, double> gammas;
  for (Method m : config.methods) {
    switch (m) {
      case Method::kClean:
        datasets[m] = data.train;
        break;
      case Method::kTaggants:
        datasets[m] = ApplySignature(data.train, signature);
        break;
      case Method::kTaggantsZeroEpsilon: {
        CraftConfig zero = config.craft;
        zero.epsilon = 0.0;
        KeySet copy = keys;
        const Signature s = CraftSignature(alice, copy, data.train, signature.plan, zero, workers);
        datasets[m] = ApplySignature(data.train, s);
        break;
      }
      case Method::kNaiveCanary: {
        datasets[m] = BaselineNaiveCanary(data.train, keys, config.budget, config.plan_seed);
        break;
      }
      case Method::kTransparency:
        gammas[m] = config.transparency_gamma;
        datasets[m] = BaselineTransparency(data.train, keys, signature.plan, gammas[m]);
        break;
      case Method::kTransparencyMatched: {
        const Dataset signed_set = ApplySignature(data.train, signature);
        const double target = MeanSignedPsnr(data.train, signed_set, signature.indices);
        gammas[m] = std::isinf(target) ? 0.0
                                       : MatchTransparencyGamma(data.train, keys, signature.plan,
                                                                target);
        datasets[m] = BaselineTransparency(data.train, keys, signature.plan, gammas[m]);
        break;
      }
      case Method::kTestImageKeys:
        datasets[m] = ApplySignature(data.train, test_signature);
        break;
    }
  }
  timings["datasets"] = sw.Seconds();

  // Bob cells: train on the published dataset only, then Alice probes.
  struct CellSpec {
    Method method;
    std::size_t run;
  };
  std::vector<CellSpec> specs;
  for (Method m : config.methods) {
    for (std::size_t r = 0; r < config.bob.size(); ++r) specs.push_back({m, r});
  }
  std::vector<CellResult> cells(specs.size());
  sw = Stopwatch();
  ParallelFor(static_cast<std::int64_t>(specs.size()), workers, [&](std::int64_t i) {
    const auto [m, run] = specs[i];
    const std::string id = ToString(m) + "-" + std::to_string(run);
    const fs::path cell_path = cells_dir / (id + ".json");
    const std::string mh = model_hash(m, run), ch = cell_hash(m, run);
    if (auto cached = ReadStage(cell_path, ch)) {
      cells[i] = CellFromJson(*cached);
      return;
    }
    const fs::path model_path = bob_dir / id / "model.bin";
    policy.CheckBobAccess(model_path);
    const fs::path model_stage = bob_dir / id / "stage.json";
    policy.CheckBobAccess(model_stage);
    Model bob(bob_configs[run].model);
    CellResult cell;
    if (auto stage = ReadStage(model_stage, mh); stage && fs::exists(model_path)) {
      bob = LoadModel(model_path);
      cell.train.validation_accuracy = stage->at("validation_accuracy").get<double>();
      cell.train.epoch_loss = stage->at("epoch_loss").get<std::vector<double>>();
      cell.train.steps = stage->at("steps").get<std::int64_t>();
      cell.train.seed = stage->at("seed").get<std::uint64_t>();
    } else {
      log("training " + id);
      auto [model, report] = Train(datasets.at(m), data.val, bob_configs[run]);
      bob = std::move(model);
      cell.train = report;
      fs::create_directories(model_path.parent_path());
      SaveModel(bob, model_path, {{"config_hash", mh}});
      Json stage_json = ToJson(report);
      stage_json["config_hash"] = mh;
      io::WriteJson(model_stage, stage_json);
    }
    // Alice's side from here on.
    const KeySet& probe_keys = m == Method::kTestImageKeys ? test_keys : keys;
    if (probe_keys.size() > 0) ProbeInto(bob, probe_keys, config.detection.k, cell);
    io::WriteJson(cell_path, CellToJson(cell, ch, m, run));
    cells[i] = std::move(cell);
  });
  timings["bob"] = sw.Seconds();

  // Aggregation.
  sw = Stopwatch();
  ExperimentReport report;
  report.config_hash = hash;
  report.alice_accuracy = alice_accuracy;
  report.signing_set_size = SigningSetSize(config.budget, data.train.size());
  for (const auto& k : keys.keys) report.key_scores.push_back(k.score.value_or(1.0));
  for (Method m : config.methods) {
    MethodRow row;
    row.method = m;
    std::vector<const CellResult*> mine;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].method == m) mine.push_back(&cells[i]);
    }
    for (const auto* c : mine) row.validation_accuracy.push_back(c->train.validation_accuracy);
    row.accuracy = Summarize(row.validation_accuracy);
    const KeySet& probe_keys = m == Method::kTestImageKeys ? test_keys : keys;
    if (m == Method::kClean) {
      if (probe_keys.size() > 0) {
        report.clean_control =
            BuildReport(mine, probe_keys, config.detection.k, config.detection.alpha, false);
      }
    } else {
      row.has_keys = true;
      row.top1 = BuildReport(mine, probe_keys, config.detection.k, config.detection.alpha, true);
      row.topk = BuildReport(mine, probe_keys, config.detection.k, config.detection.alpha, false);
      std::vector<double> a1, ak;
      for (std::size_t r = 0; r < mine.size(); ++r) {
        a1.push_back(row.top1->top_k_accuracy(r));
        ak.push_back(row.topk->top_k_accuracy(r));
      }
      row.top1_accuracy = Summarize(a1);
      row.topk_accuracy = Summarize(ak);
    }
    if (gammas.count(m)) row.gamma = gammas.at(m);
    if (m != Method::kClean) {
      row.stealth = AnalyzeStealth(alice, data.train, datasets.at(m), config.stealth);
      row.mean_psnr = row.stealth->mean_psnr;
      row.min_psnr = row.stealth->min_psnr;
    }
    report.rows.push_back(std::move(row));
  }
  timings["analysis"] = sw.Seconds();

  io::WriteJson(out / "report.json", ToJson(report));
  io::WriteText(out / "report.txt", RenderTable(report));
  io::WriteJson(out / "timings.json", timings);
  return report;
}

}  // namespace taggant
