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

#include "taggant/signer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "taggant/error.h"
#include "taggant/ops.h"
#include "taggant/rng.h"
#include "taggant/workers.h"

namespace taggant {

using diff::Tensor;

std::vector<std::int64_t> SigningPlan::AllIndices() const {
  std::vector<std::int64_t> all;
  for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  return all;
}

io::Json ToJson(const SigningPlan& plan) {
  return {{"budget", plan.budget}, {"total", plan.total}, {"parts", plan.parts}};
}

SigningPlan SigningPlanFromJson(const io::Json& j) {
  SigningPlan plan;
  plan.budget = j.at("budget").get<double>();
  plan.total = j.at("total").get<std::int64_t>();
  plan.parts = j.at("parts").get<std::vector<std::vector<std::int64_t>>>();
  return plan;
}

std::int64_t SigningSetSize(double budget, std::int64_t n) {
  if (!(budget >= 0.0 && budget <= 1.0)) throw ConfigError("budget must lie in [0,1]");
  return static_cast<std::int64_t>(std::llround(budget * static_cast<double>(n)));
}

SigningPlan SelectSigningSet(const Dataset& dataset, const KeySet& keyset, double budget,
                             std::uint64_t seed) {
  if (keyset.classes != dataset.classes()) {
    throw ConfigError("keyset |Y|=" + std::to_string(keyset.classes) + " but dataset |Y|=" +
                      std::to_string(dataset.classes()));
  }
  SigningPlan plan;
  plan.budget = budget;
  plan.total = SigningSetSize(budget, dataset.size());
  const auto K = keyset.size();
  std::vector<std::int64_t> sizes(K, plan.total / K);
  for (std::int64_t i = 0; i < plan.total % K; ++i) ++sizes[i];

  std::map<int, std::int64_t> demand;
  for (std::int64_t i = 0; i < K; ++i) demand[keyset.keys[i].label] += sizes[i];
  const auto counts = dataset.ClassCounts();
  std::string deficits;
  for (std::int64_t i = 0; i < K; ++i) {
    const int label = keyset.keys[i].label;
    if (demand[label] > counts[label]) {
      deficits += " key " + std::to_string(i) + " (label " + std::to_string(label) + ") short by " +
                  std::to_string(demand[label] - counts[label]) + ";";
    }
  }
  if (!deficits.empty()) throw ConfigError("insufficient class population:" + deficits);

  Rng rng = Rng::Stream(seed, 0x5167);
  std::map<int, std::vector<std::int64_t>> pools;
  std::map<int, std::size_t> cursor;
  plan.parts.resize(K);
  for (std::int64_t i = 0; i < K; ++i) {
    const int label = keyset.keys[i].label;
    auto it = pools.find(label);
    if (it == pools.end()) {
      auto pool = dataset.IndicesOfClass(label);
      // Only as much of the shuffle as the class demands.
      const auto need = static_cast<std::size_t>(demand[label]);
      for (std::size_t a = 0; a < need; ++a) {
        const auto b = a + rng.Below(pool.size() - a);
        std::swap(pool[a], pool[b]);
      }
      it = pools.emplace(label, std::move(pool)).first;
    }
    auto& pos = cursor[label];
    plan.parts[i].assign(it->second.begin() + pos, it->second.begin() + pos + sizes[i]);
    pos += sizes[i];
  }
  return plan;
}

void Validate(const CraftConfig& c) {
  if (!(c.epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (c.repeats < 1) throw ConfigError("repeats must be at least 1");
  if (c.restarts < 1) throw ConfigError("restarts must be at least 1");
  if (c.steps < 0) throw ConfigError("steps must be non-negative");
  if (!(c.step_size > 0.0)) throw ConfigError("step size must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0,1)");
  }
  Validate(c.recipe);
}

io::Json ToJson(const CraftConfig& c) {
  return {{"epsilon", c.epsilon},   {"lambda", c.lambda},       {"repeats", c.repeats},
          {"restarts", c.restarts}, {"steps", c.steps},         {"step_size", c.step_size},
          {"beta1", c.beta1},       {"beta2", c.beta2},         {"recipe", ToJson(c.recipe)},
          {"loss", ToString(c.loss)}, {"seed", c.seed},         {"perceptual_seed", c.perceptual_seed}};
}

CraftConfig CraftConfigFromJson(const io::Json& j) {
  CraftConfig c;
  c.epsilon = j.value("epsilon", c.epsilon);
  c.lambda = j.value("lambda", c.lambda);
  c.repeats = j.value("repeats", c.repeats);
  c.restarts = j.value("restarts", c.restarts);
  c.steps = j.value("steps", c.steps);
  c.step_size = j.value("step_size", c.step_size);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  if (j.contains("recipe")) c.recipe = AugmentRecipeFromJson(j["recipe"]);
  if (j.contains("loss")) c.loss = LossKindFromString(j["loss"]);
  c.seed = j.value("seed", c.seed);
  c.perceptual_seed = j.value("perceptual_seed", c.perceptual_seed);
  Validate(c);
  return c;
}

Tensor TaggantObjective(const Model& model, const Tensor& key_grad, const Tensor& images,
                        const Tensor& deltas, const std::vector<int>& labels,
                        const CraftConfig& config, Rng& rng) {
  const Tensor x = diff::Add(images, deltas);
  // ExpectedGrad averages over the J*R samples; the objective sums over j.
  const Tensor g = diff::MulScalar(
      ExpectedGrad(model, x, labels, config.recipe, config.repeats, config.loss, rng, true),
      static_cast<double>(images.dim(0)));
  return diff::Neg(diff::Cosine(key_grad, g));
}

Tensor CraftingObjective(const Model& model, const Tensor& key_grad, const Tensor& images,
                         const Tensor& deltas, const std::vector<int>& labels,
                         const CraftConfig& config, const PerceptualDistance& perceptual,
                         Rng& rng, Tensor* taggant_term, Tensor* perceptual_term) {
  const Tensor t = TaggantObjective(model, key_grad, images, deltas, labels, config, rng);
  if (taggant_term) *taggant_term = t;
  if (config.lambda == 0.0) {
    if (perceptual_term) *perceptual_term = Tensor::Scalar(0.0);
    return t;
  }
  const Tensor p = perceptual.Loss(images, diff::Add(images, deltas));
  if (perceptual_term) *perceptual_term = p;
  return diff::Add(t, diff::MulScalar(p, config.lambda));
}

void ProjectDelta(std::span<const double> image, double epsilon, std::span<double> delta) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double lo = std::max(-epsilon, -image[i]);
    const double hi = std::min(epsilon, 1.0 - image[i]);
    delta[i] = std::clamp(delta[i], lo, hi);
  }
}

namespace {

struct KeyTask {
  KeyCraftResult result;
  std::vector<double> delta;  // [J*C*H*W]
};

KeyTask CraftKey(const Model& model, const Key& key, const Dataset& dataset,
                 const std::vector<std::int64_t>& part, const CraftConfig& config,
                 const PerceptualDistance& perceptual, std::int64_t key_index) {
  KeyTask task;
  const auto& shape = dataset.shape();
  const auto J = static_cast<std::int64_t>(part.size());
  task.delta.assign(J * shape.numel(), 0.0);
  if (J == 0) {
    task.result.failed = true;
    task.result.failure = "empty signing part";
    return task;
  }
  const Tensor key_image =
      Tensor::FromData({1, shape.channels, shape.height, shape.width}, key.image);
  const Tensor key_grad = ParamGrad(model, key_image, {key.label}, config.loss, false).Detach();
  if (diff::L2Norm(key_grad).item() == 0.0) {
    task.result.failed = true;
    task.result.failure = "zero key gradient";
    return task;
  }
  const Tensor images = dataset.Batch(part);
  std::vector<int> labels;
  for (auto j : part) labels.push_back(dataset.label(j));
  const auto x = images.data();
  const diff::Shape batch_shape = images.shape();
  const std::vector<Tensor> reference = [&] {
    diff::NoGradGuard no_grad;
    return perceptual.Features(images);
  }();

  const double lr = config.step_size * config.epsilon;
  // With epsilon = 0 the feasible set is the single point delta = 0.
  const int steps = config.epsilon == 0.0 ? 0 : config.steps;
  const int restarts = config.epsilon == 0.0 ? 1 : config.restarts;
  double best_total = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng = Rng::Stream(SplitMix64(config.seed) ^ static_cast<std::uint64_t>(key_index),
                          static_cast<std::uint64_t>(r));
    std::vector<double> delta(x.size());
    for (auto& d : delta) d = rng.Uniform(-config.epsilon, config.epsilon);
    ProjectDelta(x, config.epsilon, delta);
    std::vector<double> m(delta.size(), 0.0), v(delta.size(), 0.0);

    double run_best = std::numeric_limits<double>::infinity();
    double run_t = 1.0, run_p = 0.0, run_initial = 1.0;
    std::vector<double> run_delta = delta;
    try {
      for (int step = 0; step <= steps; ++step) {
        const Tensor d = Tensor::FromData(batch_shape, delta, true);
        Tensor t_term, p_term;
        Tensor objective;
        if (config.lambda == 0.0) {
          objective = TaggantObjective(model, key_grad, images, d, labels, config, rng);
          t_term = objective;
        } else {
          t_term = TaggantObjective(model, key_grad, images, d, labels, config, rng);
          const Tensor p = perceptual.Loss(reference, diff::Add(images, d));
          p_term = p;
          objective = diff::Add(t_term, diff::MulScalar(p, config.lambda));
        }
        const double value = objective.item();
        if (step == 0) run_initial = t_term.item();
        if (value < run_best) {
          run_best = value;
          run_t = t_term.item();
          run_p = p_term.defined() ? p_term.item() : 0.0;
          run_delta = delta;
        }
        if (step == steps) break;
        const Tensor grad_tensor = diff::Grad(objective, {d})[0];
        const auto grad = grad_tensor.data();
        // Adam with bias correction, then projection.
        const double c1 = 1.0 - std::pow(config.beta1, step + 1);
        const double c2 = 1.0 - std::pow(config.beta2, step + 1);
        for (std::size_t i = 0; i < delta.size(); ++i) {
          m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
          v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
          delta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
        }
        ProjectDelta(x, config.epsilon, delta);
      }
    } catch (const NumericalError&) {
      task.result.restart_objectives.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    task.result.restart_objectives.push_back(run_best);
    if (run_best < best_total) {
      best_total = run_best;
      task.result.score = run_t;
      task.result.perceptual = run_p;
      task.result.initial_score = run_initial;
      task.result.selected_restart = r;
      task.delta = run_delta;
    }
  }
  if (task.result.selected_restart < 0) {
    task.result.failed = true;
    task.result.failure = "all restarts failed";
    task.result.score = 1.0;
    std::fill(task.delta.begin(), task.delta.end(), 0.0);
  }
  return task;
}

}  // namespace

Signature CraftSignature(const Model& model, KeySet& keyset, const Dataset& dataset,
                         const SigningPlan& plan, const CraftConfig& config, int workers) {
  Validate(config);
  if (static_cast<std::int64_t>(plan.parts.size()) != keyset.size()) {
    throw ConfigError("signing plan has " + std::to_string(plan.parts.size()) +
                      " parts for " + std::to_string(keyset.size()) + " keys");
  }
  if (!(dataset.shape() == keyset.shape) || !(model.spec().input == dataset.shape())) {
    throw ConfigError("model, keyset and dataset image shapes differ");
  }
  for (std::size_t i = 0; i < plan.parts.size(); ++i) {
    for (auto j : plan.parts[i]) {
      if (j < 0 || j >= dataset.size()) throw ConfigError("signing index out of range");
      if (dataset.label(j) != keyset.keys[i].label) {
        throw ConfigError("signing plan violates the clean-label rule at index " +
                          std::to_string(j));
      }
    }
  }
  const PerceptualDistance perceptual(dataset.shape().channels, config.perceptual_seed);
  std::vector<KeyTask> tasks(keyset.size());
  ParallelFor(keyset.size(), workers, [&](std::int64_t i) {
    tasks[i] = CraftKey(model, keyset.keys[i], dataset, plan.parts[i], config, perceptual, i);
  });

  Signature sig;
  sig.epsilon = config.epsilon;
  sig.plan = plan;
  sig.config = config;
  const auto n = dataset.shape().numel();
  for (std::int64_t i = 0; i < keyset.size(); ++i) {
    keyset.keys[i].score = tasks[i].result.score;
    sig.keys.push_back(tasks[i].result);
    const auto& part = plan.parts[i];
    for (std::size_t j = 0; j < part.size(); ++j) {
      const auto image = dataset.image(part[j]);
      std::vector<double> delta(n);
      for (std::int64_t p = 0; p < n; ++p) {
        const float y = SignedPixel(image[p], tasks[i].delta[j * n + p], config.epsilon);
        delta[p] = static_cast<double>(y) - static_cast<double>(image[p]);
      }
      sig.indices.push_back(part[j]);
      sig.deltas.push_back(std::move(delta));
    }
  }
  return sig;
}

float SignedPixel(float x, double delta, double epsilon) {
  const double xd = x;
  const double target = std::clamp(std::clamp(xd + delta, xd - epsilon, xd + epsilon), 0.0, 1.0);
  float y = static_cast<float>(target);
  while (static_cast<double>(y) - xd > epsilon || y > 1.0f) y = std::nextafter(y, x);
  while (xd - static_cast<double>(y) > epsilon || y < 0.0f) y = std::nextafter(y, x);
  return y;
}

Dataset ApplySignature(const Dataset& dataset, const Signature& sig) {
  Dataset out = dataset;
  if (sig.indices.size() != sig.deltas.size()) {
    throw DataIntegrityError("signature index and delta counts differ");
  }
  const auto n = dataset.shape().numel();
  for (std::size_t s = 0; s < sig.indices.size(); ++s) {
    const auto idx = sig.indices[s];
    if (idx < 0 || idx >= dataset.size()) {
      throw ConfigError("signature index " + std::to_string(idx) + " out of range");
    }
    if (static_cast<std::int64_t>(sig.deltas[s].size()) != n) {
      throw DataIntegrityError("signature delta has the wrong size");
    }
    auto pixels = out.mutable_image(idx);
    for (std::int64_t p = 0; p < n; ++p) {
      pixels[p] = SignedPixel(dataset.image(idx)[p], sig.deltas[s][p], sig.epsilon);
    }
  }
  out.set_provenance(Provenance::kSigned);
  return out;
}

namespace {
void CheckKeysetMatches(const Dataset& dataset, const KeySet& keyset) {
  if (!(dataset.shape() == keyset.shape) || dataset.classes() != keyset.classes) {
    throw ConfigError("keyset shape or |Y| does not match the dataset");
  }
}
}  // namespace

Dataset BaselineNaiveCanary(const Dataset& dataset, const KeySet& keyset, double budget,
                            std::uint64_t seed) {
  CheckKeysetMatches(dataset, keyset);
  const auto S = SigningSetSize(budget, dataset.size());
  if (S < keyset.size()) {
    throw ConfigError("canary budget covers " + std::to_string(S) + " samples for " +
                      std::to_string(keyset.size()) + " keys");
  }
  std::vector<std::int64_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::Stream(seed, 0xca9a);
  for (std::int64_t a = 0; a < S; ++a) {
    const auto b = a + static_cast<std::int64_t>(rng.Below(dataset.size() - a));
    std::swap(order[a], order[b]);
  }
  Dataset out = dataset;
  for (std::int64_t t = 0; t < S; ++t) {
    const auto& key = keyset.keys[t % keyset.size()];
    auto pixels = out.mutable_image(order[t]);
    for (std::size_t p = 0; p < pixels.size(); ++p) pixels[p] = static_cast<float>(key.image[p]);
    out.set_label(order[t], key.label);
  }
  out.set_provenance(Provenance::kCanary);
  return out;
}

Dataset BaselineTransparency(const Dataset& dataset, const KeySet& keyset,
                             const SigningPlan& plan, double gamma) {
  CheckKeysetMatches(dataset, keyset);
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
  if (static_cast<std::int64_t>(plan.parts.size()) != keyset.size()) {
    throw ConfigError("plan and keyset sizes differ");
  }
  Dataset out = dataset;
  for (std::size_t i = 0; i < plan.parts.size(); ++i) {
    const auto& key = keyset.keys[i].image;
    for (auto j : plan.parts[i]) {
      auto pixels = out.mutable_image(j);
      for (std::size_t p = 0; p < pixels.size(); ++p) {
        pixels[p] = gamma == 0.0 ? pixels[p]
                                 : static_cast<float>(gamma * key[p] + (1.0 - gamma) * pixels[p]);
      }
    }
  }
  out.set_provenance(Provenance::kTransparency);
  return out;
}

KeySet TestImageKeys(const Dataset& heldout, std::int64_t count, std::uint64_t seed) {
  if (count < 1 || count > heldout.size()) {
    throw ConfigError("cannot draw " + std::to_string(count) + " keys from " +
                      std::to_string(heldout.size()) + " held-out images");
  }
  KeySet ks;
  ks.seed = seed;
  ks.shape = heldout.shape();
  ks.classes = heldout.classes();
  ks.metadata["source"] = "held-out images";
  Rng pick = Rng::Stream(seed, 1);
  Rng labels = Rng::Stream(seed, 2);
  std::vector<std::int64_t> order(heldout.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::int64_t a = 0; a < count; ++a) {
    const auto b = a + static_cast<std::int64_t>(pick.Below(heldout.size() - a));
    std::swap(order[a], order[b]);
    Key key;
    key.image = heldout.ImageValues(order[a]);
    key.label = static_cast<int>(labels.Below(ks.classes));
    ks.keys.push_back(std::move(key));
  }
  return ks;
}

void SaveSignature(const Signature& sig, const std::filesystem::path& path,
                   const io::Json& extra) {
  io::Json keys = io::Json::array();
  for (const auto& k : sig.keys) {
    keys.push_back({{"score", k.score},
                    {"perceptual", k.perceptual},
                    {"initial_score", k.initial_score},
                    {"selected_restart", k.selected_restart},
                    {"failed", k.failed},
                    {"failure", k.failure}});
  }
  std::vector<double> blob;
  for (const auto& d : sig.deltas) blob.insert(blob.end(), d.begin(), d.end());
  io::Json header = {{"kind", "signature"},
                     {"format_version", kSignatureFormatVersion},
                     {"epsilon", sig.epsilon},
                     {"plan", ToJson(sig.plan)},
                     {"config", ToJson(sig.config)},
                     {"keys", keys},
                     {"indices", sig.indices},
                     {"delta_size", sig.deltas.empty() ? 0 : sig.deltas[0].size()}};
  if (!extra.empty()) header["extra"] = extra;
  io::WriteContainer(path, header, io::EncodeF64(blob));
}

Signature LoadSignature(const std::filesystem::path& path) {
  const auto c = io::ReadContainer(path, "signature", kSignatureFormatVersion);
  Signature sig;
  try {
    sig.epsilon = c.header.at("epsilon").get<double>();
    sig.plan = SigningPlanFromJson(c.header.at("plan"));
    sig.config = CraftConfigFromJson(c.header.at("config"));
    for (const auto& k : c.header.at("keys")) {
      KeyCraftResult r;
      r.score = k.at("score").get<double>();
      r.perceptual = k.at("perceptual").get<double>();
      r.initial_score = k.at("initial_score").get<double>();
      r.selected_restart = k.at("selected_restart").get<int>();
      r.failed = k.at("failed").get<bool>();
      r.failure = k.at("failure").get<std::string>();
      sig.keys.push_back(r);
    }
    sig.indices = c.header.at("indices").get<std::vector<std::int64_t>>();
    const auto n = c.header.at("delta_size").get<std::size_t>();
    const auto values = io::DecodeF64(c.blob);
    if (values.size() != n * sig.indices.size()) {
      throw DataIntegrityError(path.string() + ": delta blob size mismatch");
    }
    for (std::size_t s = 0; s < sig.indices.size(); ++s) {
      sig.deltas.emplace_back(values.begin() + s * n, values.begin() + (s + 1) * n);
    }
  } catch (const io::Json::exception& e) {
    throw DataIntegrityError(path.string() + ": malformed signature header: " + e.what());
  }
  return sig;
}

}  // namespace taggant
