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

// Command-line front end. Every command takes an optional --config JSON file
// whose keys match the long flag names (dashes become underscores); flags
// override the file. Outputs carry the hash of the effective configuration.
//
// Exit codes: 0 ok, 2 config error, 3 data integrity, 4 numerical failure,
// 5 detection-infrastructure failure.

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "taggant/dataset.h"
#include "taggant/detector.h"
#include "taggant/endpoint.h"
#include "taggant/error.h"
#include "taggant/experiment.h"
#include "taggant/io.h"
#include "taggant/keys.h"
#include "taggant/model.h"
#include "taggant/signer.h"
#include "taggant/stealth.h"
#include "taggant/trainer.h"
#include "taggant/workers.h"

namespace fs = std::filesystem;
using taggant::io::Json;

namespace {

enum class Kind { kString, kInt, kDouble, kBool, kStringList };

// A flag that, when given, overrides one key of the command's JSON config.
struct Binding {
  CLI::Option* option = nullptr;
  std::string key;  // dotted path into the config
  Kind kind = Kind::kString;
  std::shared_ptr<std::string> text = std::make_shared<std::string>();
  std::shared_ptr<std::vector<std::string>> list = std::make_shared<std::vector<std::string>>();
  std::shared_ptr<bool> flag = std::make_shared<bool>(false);
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help)
      : sub_(app.add_subcommand(name, help)), name_(name) {
    sub_->add_option("--config", config_path_, "JSON config; flags override its keys");
  }

  Command& Add(const std::string& flag, Kind kind, const std::string& help,
               std::string key = "") {
    Binding b;
    b.kind = kind;
    if (key.empty()) {
      key = flag.substr(2);
      std::replace(key.begin(), key.end(), '-', '_');
    }
    b.key = key;
    if (kind == Kind::kBool) {
      b.option = sub_->add_flag(flag, *b.flag, help);
    } else if (kind == Kind::kStringList) {
      b.option = sub_->add_option(flag, *b.list, help);
    } else {
      b.option = sub_->add_option(flag, *b.text, help);
    }
    bindings_.push_back(b);
    return *this;
  }

  CLI::App* app() { return sub_; }
  const std::string& name() const { return name_; }

  // The file's config with every given flag applied.
  Json Effective() const {
    Json j = config_path_.empty() ? Json::object() : taggant::io::ReadJson(config_path_);
    if (!j.is_object()) throw taggant::ConfigError("--config must hold a JSON object");
    for (const auto& b : bindings_) {
      if (b.option->count() == 0) continue;
      Json value;
      try {
        switch (b.kind) {
          case Kind::kString: value = *b.text; break;
          case Kind::kInt: value = std::stoll(*b.text); break;
          case Kind::kDouble: value = std::stod(*b.text); break;
          case Kind::kBool: value = *b.flag; break;
          case Kind::kStringList: value = *b.list; break;
        }
      } catch (const std::logic_error&) {
        throw taggant::ConfigError("invalid value '" + *b.text + "' for --" + b.key);
      }
      Json* node = &j;
      std::size_t start = 0;
      for (std::size_t dot; (dot = b.key.find('.', start)) != std::string::npos; start = dot + 1) {
        node = &(*node)[b.key.substr(start, dot - start)];
      }
      (*node)[b.key.substr(start)] = value;
    }
    return j;
  }

 private:
  CLI::App* sub_;
  std::string name_;
  std::string config_path_;
  std::vector<Binding> bindings_;
};

std::string Required(const Json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
    throw taggant::ConfigError("missing required setting '" + key + "'");
  }
  return j[key].get<std::string>();
}

// Output destinations do not change results, so they stay out of the hash.
std::string HashWithoutOutputs(Json config) {
  for (auto it = config.begin(); it != config.end();) {
    if (it.key().rfind("out", 0) == 0 || it.key() == "report") {
      it = config.erase(it);
    } else {
      ++it;
    }
  }
  return taggant::io::ConfigHash(config);
}

Json WithHash(Json extra, const Json& config) {
  extra["config_hash"] = HashWithoutOutputs(config);
  return extra;
}

taggant::ImageShape ShapeFrom(const Json& j) {
  taggant::ImageShape s;
  if (j.contains("shape")) return taggant::ImageShapeFromJson(j["shape"]);
  s.channels = j.value("channels", s.channels);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  return s;
}

void MakeDataset(const Json& c) {
  const Json extra = WithHash(Json::object(), c);
  if (c.contains("ingest")) {
    const taggant::Dataset d =
        taggant::IngestDirectory(Required(c, "ingest"), ShapeFrom(c), c.at("classes").get<int>());
    taggant::SaveDataset(d, Required(c, "out"), extra);
    std::cout << "ingested " << d.size() << " images\n";
    return;
  }
  Json params = c;
  params["shape"] = taggant::ToJson(ShapeFrom(c));
  const auto split = taggant::MakeSyntheticDataset(taggant::SyntheticParamsFromJson(params));
  taggant::SaveDataset(split.train, Required(c, "out_train"), extra);
  taggant::SaveDataset(split.val, Required(c, "out_val"), extra);
  std::cout << "train " << split.train.size() << " / val " << split.val.size() << " images\n";
}

void GenKeys(const Json& c) {
  taggant::ImageShape shape = ShapeFrom(c);
  int classes = c.value("classes", 0);
  if (c.contains("dataset")) {
    const Json m = taggant::LoadDatasetManifest(Required(c, "dataset"));
    shape = taggant::ImageShapeFromJson(m.at("shape"));
    classes = m.at("classes").get<int>();
  }
  if (classes < 2) throw taggant::ConfigError("gen-keys needs --classes or --dataset");
  taggant::KeySet ks = taggant::GenerateKeys(c.value("count", 10), shape, classes,
                                             c.value("seed", std::uint64_t{0}));
  ks.metadata["config_hash"] = HashWithoutOutputs(c);
  const fs::path out = Required(c, "out");
  taggant::CheckKeysetDestination(out);
  taggant::SaveKeyset(ks, out);
  std::cout << "wrote " << ks.size() << " keys\n";
}

void Sign(const Json& c) {
  const taggant::Dataset dataset = taggant::LoadDataset(Required(c, "dataset"));
  taggant::KeySet keys = taggant::LoadKeyset(Required(c, "keyset"));
  const std::string method = c.value("method", std::string("taggants"));
  const double budget = c.value("budget", 0.02);
  const std::uint64_t plan_seed = c.value("plan_seed", std::uint64_t{2});
  const Json extra = WithHash(Json::object(), c);
  const fs::path out_dataset = Required(c, "out_dataset");

  if (method == "naive-canary") {
    taggant::SaveDataset(taggant::BaselineNaiveCanary(dataset, keys, budget, plan_seed),
                         out_dataset, extra);
    return;
  }
  const taggant::SigningPlan plan = taggant::SelectSigningSet(dataset, keys, budget, plan_seed);
  if (method == "transparency") {
    taggant::SaveDataset(
        taggant::BaselineTransparency(dataset, keys, plan, c.value("gamma", 0.2)), out_dataset,
        extra);
    return;
  }
  if (method != "taggants") throw taggant::ConfigError("unknown signing method '" + method + "'");
  const taggant::Model model = taggant::LoadModel(Required(c, "model"));
  const taggant::CraftConfig craft =
      taggant::CraftConfigFromJson(c.value("craft", Json::object()));
  const taggant::Signature sig = taggant::CraftSignature(model, keys, dataset, plan, craft,
                                                         taggant::WorkerCount());
  taggant::SaveDataset(taggant::ApplySignature(dataset, sig), out_dataset, extra);
  if (c.contains("out_signature")) {
    const fs::path p = Required(c, "out_signature");
    taggant::CheckKeysetDestination(p);
    taggant::SaveSignature(sig, p, extra);
  }
  if (c.contains("out_keyset")) {
    const fs::path p = Required(c, "out_keyset");
    taggant::CheckKeysetDestination(p);
    keys.metadata["config_hash"] = extra["config_hash"];
    taggant::SaveKeyset(keys, p);
  }
  for (std::size_t i = 0; i < sig.keys.size(); ++i) {
    std::cout << "key " << i << ": objective " << sig.keys[i].score
              << (sig.keys[i].failed ? " (failed: " + sig.keys[i].failure + ")" : "") << "\n";
  }
}

void TrainCommand(const Json& c) {
  const taggant::Dataset train = taggant::LoadDataset(Required(c, "train"));
  const taggant::Dataset val = taggant::LoadDataset(Required(c, "val"));
  Json cfg = c;
  for (const char* k : {"train", "val", "out", "report"}) cfg.erase(k);
  cfg["model"]["input_shape"] = taggant::ToJson(train.shape());
  cfg["model"]["classes"] = train.classes();
  const taggant::TrainConfig config = taggant::TrainConfigFromJson(cfg);
  auto [model, report] = taggant::Train(train, val, config);
  const Json extra = WithHash(Json::object(), c);
  taggant::SaveModel(model, Required(c, "out"), extra);
  if (c.contains("report")) {
    Json r = taggant::ToJson(report);
    r["config_hash"] = extra["config_hash"];
    taggant::io::WriteJson(Required(c, "report"), r);
  }
  std::cout << "validation accuracy " << report.validation_accuracy << "\n";
}

void DetectCommand(const Json& c) {
  const taggant::KeySet keys = taggant::LoadKeyset(Required(c, "keyset"));
  std::vector<taggant::Model> models;
  for (const auto& p : c.value("models", std::vector<std::string>{})) {
    models.push_back(taggant::LoadModel(p));
  }
  std::vector<std::unique_ptr<taggant::SuspectEndpoint>> endpoints;
  for (const auto& m : models) {
    if (m.spec().classes != keys.classes) {
      throw taggant::ConfigError("keyset has |Y| = " + std::to_string(keys.classes) +
                                 " but the model has " + std::to_string(m.spec().classes) +
                                 " classes");
    }
    endpoints.push_back(std::make_unique<taggant::ModelEndpoint>(m));
  }
  taggant::RemoteOptions ro;
  ro.timeout_seconds = c.value("timeout", ro.timeout_seconds);
  ro.retries = c.value("retries", ro.retries);
  ro.k_limit = c.value("k_limit", ro.k_limit);
  for (const auto& u : c.value("urls", std::vector<std::string>{})) {
    endpoints.push_back(std::make_unique<taggant::RemoteEndpoint>(u, ro));
  }
  std::vector<taggant::SuspectEndpoint*> raw;
  for (auto& e : endpoints) raw.push_back(e.get());
  const taggant::DetectionReport report =
      taggant::Detect(raw, keys, c.value("k", 1), c.value("alpha", 0.01));
  Json out = taggant::ToJson(report);
  out["config_hash"] = HashWithoutOutputs(c);
  if (c.contains("out")) taggant::io::WriteJson(Required(c, "out"), out);
  std::cout << "combined log10 p = " << report.combined_log10_p << " -> "
            << (report.reject_null ? "reject H0 (dataset use detected)" : "accept H0") << "\n";
}

void StealthCommand(const Json& c) {
  const taggant::Model model = taggant::LoadModel(Required(c, "model"));
  const taggant::Dataset original = taggant::LoadDataset(Required(c, "original"));
  const taggant::Dataset modified = taggant::LoadDataset(Required(c, "modified"));
  taggant::StealthOptions o;
  o.k_nn = c.value("k_nn", o.k_nn);
  o.top_fraction = c.value("top_fraction", o.top_fraction);
  o.restrict_to_signed_classes = !c.value("all_classes", false);
  const taggant::StealthReport r = taggant::AnalyzeStealth(model, original, modified, o);
  Json out = taggant::ToJson(r, c.value("include_scores", false));
  out["config_hash"] = HashWithoutOutputs(c);
  if (c.contains("out")) taggant::io::WriteJson(Required(c, "out"), out);
  std::cout << "mean PSNR " << r.mean_psnr << " dB, detection rate " << r.detection_rate
            << " (base rate " << r.base_rate << ")\n";
}

void ExperimentCommand(const Json& c) {
  Json cfg = c;
  taggant::RunOptions options;
  options.out_dir = Required(c, "out");
  options.verbose = c.value("verbose", false);
  options.workers = taggant::WorkerCount();
  cfg.erase("out");
  cfg.erase("verbose");
  const taggant::ExperimentReport report =
      taggant::RunExperiment(taggant::ExperimentConfigFromJson(cfg), options);
  std::cout << taggant::RenderTable(report);
}

taggant::ModelServer* g_server = nullptr;

void Serve(const Json& c) {
  const taggant::Model model = taggant::LoadModel(Required(c, "model"));
  taggant::ModelServer server(model);
  const int port = server.Start(c.value("host", std::string("127.0.0.1")), c.value("port", 8080));
  std::cout << "serving on port " << port << std::endl;
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->Stop();
  });
  server.Wait();
  g_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset ownership verification with data taggants"};
  app.require_subcommand(1);

  Command make(app, "make-dataset", "generate a synthetic dataset or ingest a directory");
  make.Add("--classes", Kind::kInt, "class count")
      .Add("--train-count", Kind::kInt, "training images")
      .Add("--val-count", Kind::kInt, "validation images")
      .Add("--channels", Kind::kInt, "image channels")
      .Add("--height", Kind::kInt, "image height")
      .Add("--width", Kind::kInt, "image width")
      .Add("--seed", Kind::kInt, "generator seed")
      .Add("--noise-std", Kind::kDouble, "pixel noise")
      .Add("--out-train", Kind::kString, "training set directory")
      .Add("--out-val", Kind::kString, "validation set directory")
      .Add("--ingest", Kind::kString, "directory of <label>/*.f32 files to ingest")
      .Add("--out", Kind::kString, "output directory for --ingest");

  Command keys(app, "gen-keys", "generate secret keys");
  keys.Add("--count", Kind::kInt, "number of keys")
      .Add("--classes", Kind::kInt, "class count |Y|")
      .Add("--channels", Kind::kInt, "image channels")
      .Add("--height", Kind::kInt, "image height")
      .Add("--width", Kind::kInt, "image width")
      .Add("--dataset", Kind::kString, "take shape and |Y| from this dataset")
      .Add("--seed", Kind::kInt, "key seed")
      .Add("--out", Kind::kString, "keyset file");

  Command sign(app, "sign", "produce a signed dataset");
  sign.Add("--dataset", Kind::kString, "dataset directory")
      .Add("--keyset", Kind::kString, "keyset file")
      .Add("--model", Kind::kString, "surrogate model (taggants)")
      .Add("--method", Kind::kString, "taggants | naive-canary | transparency")
      .Add("--budget", Kind::kDouble, "fraction of the dataset to modify")
      .Add("--plan-seed", Kind::kInt, "signing-set sampling seed")
      .Add("--gamma", Kind::kDouble, "transparency weight")
      .Add("--epsilon", Kind::kDouble, "L-infinity bound", "craft.epsilon")
      .Add("--lambda", Kind::kDouble, "perceptual weight", "craft.lambda")
      .Add("--steps", Kind::kInt, "optimizer steps", "craft.steps")
      .Add("--restarts", Kind::kInt, "random restarts per key", "craft.restarts")
      .Add("--repeats", Kind::kInt, "augmentation draws per step", "craft.repeats")
      .Add("--seed", Kind::kInt, "crafting seed", "craft.seed")
      .Add("--out-dataset", Kind::kString, "signed dataset directory")
      .Add("--out-signature", Kind::kString, "signature file (secret)")
      .Add("--out-keyset", Kind::kString, "keyset with crafting scores (secret)");

  Command train(app, "train", "train a model");
  train.Add("--train", Kind::kString, "training set directory")
      .Add("--val", Kind::kString, "validation set directory")
      .Add("--arch", Kind::kString, "mlp | cnn-small | cnn-medium", "model.architecture")
      .Add("--width", Kind::kInt, "first conv width", "model.width")
      .Add("--epochs", Kind::kInt, "epochs")
      .Add("--batch-size", Kind::kInt, "batch size")
      .Add("--lr", Kind::kDouble, "peak learning rate", "learning_rate")
      .Add("--recipe", Kind::kString, "none | simple | strong")
      .Add("--seed", Kind::kInt, "training seed")
      .Add("--out", Kind::kString, "model file")
      .Add("--report", Kind::kString, "training report JSON");

  Command detect(app, "detect", "test a suspect model for the keys");
  detect.Add("--keyset", Kind::kString, "keyset file")
      .Add("--model", Kind::kStringList, "model file, one per training run", "models")
      .Add("--url", Kind::kStringList, "remote endpoint base URL", "urls")
      .Add("--k", Kind::kInt, "top-k")
      .Add("--alpha", Kind::kDouble, "test level")
      .Add("--timeout", Kind::kDouble, "remote timeout in seconds")
      .Add("--retries", Kind::kInt, "remote retries")
      .Add("--k-limit", Kind::kInt, "largest k the remote endpoints answer")
      .Add("--out", Kind::kString, "report JSON");

  Command stealth(app, "stealth", "PSNR and k-NN outlier analysis of a modified dataset");
  stealth.Add("--model", Kind::kString, "clean model for features")
      .Add("--original", Kind::kString, "original dataset")
      .Add("--modified", Kind::kString, "modified dataset")
      .Add("--k-nn", Kind::kInt, "neighbours")
      .Add("--top-fraction", Kind::kDouble, "flagged fraction")
      .Add("--all-classes", Kind::kBool, "analyze every class")
      .Add("--include-scores", Kind::kBool, "write per-image scores")
      .Add("--out", Kind::kString, "report JSON");

  Command experiment(app, "experiment", "run the comparison experiment");
  experiment.Add("--out", Kind::kString, "output directory")
      .Add("--verbose", Kind::kBool, "progress on stderr");

  Command serve(app, "serve", "answer top-k queries for a model over HTTP");
  serve.Add("--model", Kind::kString, "model file")
      .Add("--host", Kind::kString, "bind address")
      .Add("--port", Kind::kInt, "port, 0 for any");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(taggant::ExitCode::kConfig);
  }

  const std::map<std::string, std::function<void(const Json&)>> handlers = {
      {"make-dataset", MakeDataset}, {"gen-keys", GenKeys},
      {"sign", Sign},                {"train", TrainCommand},
      {"detect", DetectCommand},
      {"stealth", StealthCommand},   {"experiment", ExperimentCommand},
      {"serve", Serve},
  };
  try {
    for (Command* cmd : {&make, &keys, &sign, &train, &detect, &stealth, &experiment, &serve}) {
      if (cmd->app()->parsed()) {
        handlers.at(cmd->name())(cmd->Effective());
        return 0;
      }
    }
  } catch (const taggant::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const Json::exception& e) {
    std::cerr << "error: malformed configuration: " << e.what() << "\n";
    return static_cast<int>(taggant::ExitCode::kConfig);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(taggant::ExitCode::kDataIntegrity);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(taggant::ExitCode::kConfig);
  }
  return 0;
}
