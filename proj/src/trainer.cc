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

#include "taggant/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "taggant/error.h"
#include "taggant/ops.h"
#include "taggant/rng.h"

namespace taggant {

using diff::Tensor;

void Validate(const TrainConfig& c) {
  Validate(c.model);
  if (c.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (c.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(c.warmup_epochs >= 0.0)) throw ConfigError("warmup epochs must be non-negative");
  if (!(c.mixup_alpha >= 0.0 && c.cutmix_alpha >= 0.0)) {
    throw ConfigError("mixing alphas must be non-negative");
  }
  if (!(c.mix_prob >= 0.0 && c.mix_prob <= 1.0)) throw ConfigError("mix_prob must lie in [0,1]");
  if (c.repeated_augmentation < 1) throw ConfigError("repeated_augmentation must be >= 1");
  Validate(c.recipe);
}

io::Json ToJson(const TrainConfig& c) {
  return {{"model", ToJson(c.model)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"warmup_epochs", c.warmup_epochs},
          {"loss", ToString(c.loss)},
          {"recipe", ToJson(c.recipe)},
          {"seed", c.seed},
          {"mixup_alpha", c.mixup_alpha},
          {"cutmix_alpha", c.cutmix_alpha},
          {"mix_prob", c.mix_prob},
          {"repeated_augmentation", c.repeated_augmentation}};
}

TrainConfig TrainConfigFromJson(const io::Json& j) {
  TrainConfig c;
  if (j.contains("model")) c.model = ModelSpecFromJson(j["model"]);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  if (j.contains("loss")) c.loss = LossKindFromString(j["loss"]);
  if (j.contains("recipe")) c.recipe = AugmentRecipeFromJson(j["recipe"]);
  c.seed = j.value("seed", c.seed);
  c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);
  c.cutmix_alpha = j.value("cutmix_alpha", c.cutmix_alpha);
  c.mix_prob = j.value("mix_prob", c.mix_prob);
  c.repeated_augmentation = j.value("repeated_augmentation", c.repeated_augmentation);
  Validate(c);
  return c;
}

io::Json ToJson(const TrainReport& r, bool include_wall_time) {
  io::Json j = {{"validation_accuracy", r.validation_accuracy},
                {"epoch_loss", r.epoch_loss},
                {"steps", r.steps},
                {"seed", r.seed}};
  if (include_wall_time) j["wall_seconds"] = r.wall_seconds;
  return j;
}

double ScheduledLearningRate(const TrainConfig& c, std::int64_t step,
                             std::int64_t steps_per_epoch) {
  const double total = static_cast<double>(c.epochs * steps_per_epoch);
  const double warmup = std::min(total, c.warmup_epochs * static_cast<double>(steps_per_epoch));
  const double s = static_cast<double>(step);
  if (s < warmup) return c.learning_rate * (s + 1.0) / warmup;
  const double progress = total > warmup ? (s - warmup) / (total - warmup) : 1.0;
  return 0.5 * c.learning_rate * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

// Gamma(alpha, 1) by Marsaglia-Tsang; Beta(a, a) from two of them.
double SampleGamma(double alpha, Rng& rng) {
  if (alpha < 1.0) return SampleGamma(alpha + 1.0, rng) * std::pow(rng.Uniform(), 1.0 / alpha);
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.Normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.Uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

double SampleBeta(double a, Rng& rng) {
  const double x = SampleGamma(a, rng);
  const double y = SampleGamma(a, rng);
  return x / (x + y);
}

std::vector<std::int64_t> EpochOrder(std::int64_t n, int repeats, Rng& rng) {
  std::vector<std::int64_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::int64_t i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.Below(i + 1)]);
  }
  if (repeats == 1) return perm;
  std::vector<std::int64_t> order;
  order.reserve(n);
  for (std::int64_t i = 0; static_cast<std::int64_t>(order.size()) < n; ++i) {
    for (int r = 0; r < repeats && static_cast<std::int64_t>(order.size()) < n; ++r) {
      order.push_back(perm[i]);
    }
  }
  return order;
}

// Augmented batch values, built without recording.
std::vector<double> AugmentedBatch(const Dataset& data, std::span<const std::int64_t> idx,
                                   const AugmentRecipe& recipe, Rng& rng) {
  const auto& shape = data.shape();
  const auto n = shape.numel();
  std::vector<double> values(idx.size() * n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto image = data.image(idx[i]);
    std::copy(image.begin(), image.end(), values.begin() + i * n);
    if (recipe.id == RecipeId::kNone) continue;
    const auto t = SampleTransform(recipe, shape.channels, TransformMode::kTraining, rng);
    if (t.IsIdentity()) continue;
    const Tensor out = ApplyTransform(
        t, Tensor::FromData(shape.AsShape(), {values.begin() + i * n, values.begin() + (i + 1) * n}),
        TransformMode::kTraining);
    std::copy(out.data().begin(), out.data().end(), values.begin() + i * n);
  }
  return values;
}

}  // namespace

std::pair<Model, TrainReport> Train(const Dataset& train, const Dataset& val,
                                    const TrainConfig& config) {
  Validate(config);
  if (!(train.shape() == val.shape()) || train.classes() != val.classes()) {
    throw ConfigError("training and validation sets differ in shape or |Y|");
  }
  if (!(config.model.input == train.shape()) || config.model.classes != train.classes()) {
    throw ConfigError("model spec does not match the dataset shape or |Y|");
  }
  if (train.size() == 0) throw ConfigError("empty training set");
  const auto start = std::chrono::steady_clock::now();

  Model model(config.model);
  TrainReport report;
  report.seed = config.seed;
  Rng order_rng = Rng::Stream(config.seed, 1);
  Rng augment_rng = Rng::Stream(config.seed, 2);
  Rng mix_rng = Rng::Stream(config.seed, 3);

  const auto& params = model.parameters();
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.numel(), 0.0);

  const auto& shape = train.shape();
  const auto n_pix = shape.numel();
  const std::int64_t N = train.size();
  const std::int64_t steps_per_epoch = (N + config.batch_size - 1) / config.batch_size;
  std::int64_t step = 0;
  const bool mixing = config.mix_prob > 0.0 && (config.mixup_alpha > 0.0 || config.cutmix_alpha > 0.0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = EpochOrder(N, config.repeated_augmentation, order_rng);
    double loss_sum = 0.0;
    for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
      const auto begin = b * config.batch_size;
      const auto count = std::min<std::int64_t>(config.batch_size, N - begin);
      std::span<const std::int64_t> idx(order.data() + begin, count);
      auto values = AugmentedBatch(train, idx, config.recipe, augment_rng);
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(train.label(i));

      // Soft targets for mixed batches: partner is the batch reversed.
      std::vector<double> targets;
      bool mixed = false;
      if (mixing && mix_rng.Bernoulli(config.mix_prob)) {
        mixed = true;
        const bool use_cutmix =
            config.cutmix_alpha > 0.0 && (config.mixup_alpha == 0.0 || mix_rng.Bernoulli(0.5));
        const double lam = SampleBeta(use_cutmix ? config.cutmix_alpha : config.mixup_alpha, mix_rng);
        std::vector<double> partner(values.size());
        for (std::int64_t i = 0; i < count; ++i) {
          std::copy_n(values.begin() + (count - 1 - i) * n_pix, n_pix, partner.begin() + i * n_pix);
        }
        double weight = lam;
        if (use_cutmix) {
          const double side = std::sqrt(1.0 - lam);
          const auto ch = static_cast<std::int64_t>(std::round(side * shape.height));
          const auto cw = static_cast<std::int64_t>(std::round(side * shape.width));
          const auto r0 = mix_rng.IntInRange(0, shape.height - ch);
          const auto c0 = mix_rng.IntInRange(0, shape.width - cw);
          for (std::int64_t i = 0; i < count; ++i) {
            for (std::int64_t c = 0; c < shape.channels; ++c) {
              for (auto r = r0; r < r0 + ch; ++r) {
                for (auto q = c0; q < c0 + cw; ++q) {
                  const auto p = i * n_pix + (c * shape.height + r) * shape.width + q;
                  values[p] = partner[p];
                }
              }
            }
          }
          weight = 1.0 - static_cast<double>(ch * cw) / static_cast<double>(shape.height * shape.width);
        } else {
          for (std::size_t p = 0; p < values.size(); ++p) {
            values[p] = lam * values[p] + (1.0 - lam) * partner[p];
          }
        }
        targets.assign(count * train.classes(), 0.0);
        for (std::int64_t i = 0; i < count; ++i) {
          targets[i * train.classes() + labels[i]] += weight;
          targets[i * train.classes() + labels[count - 1 - i]] += 1.0 - weight;
        }
      }

      const Tensor batch =
          Tensor::FromData({count, shape.channels, shape.height, shape.width}, std::move(values));
      Tensor loss;
      try {
        loss = mixed ? LossWithTargets(model, batch,
                                       Tensor::FromData({count, train.classes()}, targets),
                                       config.loss)
                     : Loss(model, batch, labels, config.loss);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged in epoch " + std::to_string(epoch) + ": " +
                             e.what());
      }
      loss_sum += loss.item() * static_cast<double>(count);
      const auto grads = diff::Grad(loss, params, {.create_graph = false, .allow_unused = true});
      const double lr = ScheduledLearningRate(config, step, steps_per_epoch);
      for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor param = params[k];  // shares the node
        auto& w = param.mutable_data();
        const auto g = grads[k].data();
        auto& v = velocity[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = config.momentum * v[i] + g[i] + config.weight_decay * w[i];
          w[i] -= lr * v[i];
        }
      }
      ++step;
    }
    const double mean_loss = loss_sum / static_cast<double>(N);
    if (!std::isfinite(mean_loss)) {
      throw NumericalError("training diverged in epoch " + std::to_string(epoch));
    }
    report.epoch_loss.push_back(mean_loss);
  }
  report.steps = step;
  report.validation_accuracy = val.size() > 0 ? Evaluate(model, val) : 0.0;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

double Evaluate(const Model& model, const Dataset& val) {
  if (val.size() == 0) throw ConfigError("cannot evaluate on an empty validation set");
  if (!(model.spec().input == val.shape())) throw ConfigError("validation shape mismatch");
  constexpr std::int64_t kChunk = 250;
  std::int64_t correct = 0;
  for (std::int64_t begin = 0; begin < val.size(); begin += kChunk) {
    const auto count = std::min(kChunk, val.size() - begin);
    std::vector<std::int64_t> idx(count);
    std::iota(idx.begin(), idx.end(), begin);
    const auto top = PredictTopKBatch(model, val.Batch(idx), 1);
    for (std::int64_t i = 0; i < count; ++i) {
      if (top[i][0] == val.label(begin + i)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(val.size());
}

}  // namespace taggant
