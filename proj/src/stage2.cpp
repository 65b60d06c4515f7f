// Copyright 2026 The vibsplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vibsplit/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "vibsplit/error.hpp"

namespace vibsplit {

Vector Stage2Model::layer_weight_values() const {
  if (config.fixed_layer) {
    Vector w = Vector::Zero(layer_logits.value.rows());
    w(*config.fixed_layer) = 1.0;
    return w;
  }
  return layer_weights(layer_logits.value.col(0));
}

Matrix Stage2Model::input(const LayerStack& layers) const {
  if (static_cast<int>(layers.size()) != layer_count())
    throw InvalidInput("stage2: model expects " + std::to_string(layer_count()) + " layers, got " +
                       std::to_string(layers.size()));
  if (config.fixed_layer) return layers[static_cast<std::size_t>(*config.fixed_layer)];
  return layer_mix(layers, layer_logits.value.col(0));
}

ParamRefs Stage2Model::trainable() {
  ParamRefs out;
  if (!config.fixed_layer) out.push_back(&layer_logits);
  encoder.collect(out);
  pooler.collect(out);
  classifier.collect(out);
  return out;
}

ConstParamRefs Stage2Model::parameters() const {
  ConstParamRefs out{&layer_logits};
  encoder.collect(out);
  pooler.collect(out);
  classifier.collect(out);
  return out;
}

int class_count(const Corpus& corpus, Task task) {
  int k = 0;
  for (const auto& r : corpus.records)
    if (auto y = r.labels.get(task)) k = std::max(k, *y + 1);
  return k;
}

Stage2Model init_stage2(std::shared_ptr<const Stage1Model> stage1, std::uint32_t layers,
                        std::uint32_t width, int classes, const Stage2Config& cfg) {
  if (!stage1) throw ConfigError("stage2: a stage-1 model is required");
  if (cfg.d < 1) throw ConfigError("stage2: bottleneck width must be positive");
  if (!cfg.allowed_d.empty() &&
      std::find(cfg.allowed_d.begin(), cfg.allowed_d.end(), cfg.d) == cfg.allowed_d.end())
    throw ConfigError("stage2: bottleneck width " + std::to_string(cfg.d) +
                      " is not in the configured set");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw ConfigError("stage2: epochs and batch size must be positive");
  if (classes < 2) throw InvalidInput("stage2: need at least two classes");
  if (cfg.fixed_layer && (*cfg.fixed_layer < 0 || *cfg.fixed_layer >= static_cast<int>(layers)))
    throw ConfigError("stage2: layer " + std::to_string(*cfg.fixed_layer) + " out of range");
  Rng rng(derive_seed(cfg.seed, 11));
  Stage2Model m;
  m.config = cfg;
  m.class_count = classes;
  m.layer_logits = Param("stage2.layer_logits", Matrix::Zero(layers, 1), false);
  m.encoder = BottleneckEncoderParams("stage2.encoder", width, cfg.d, cfg.init_gain, rng);
  const double scale = cfg.init_gain / std::sqrt(static_cast<double>(cfg.d));
  m.pooler = AttentionPooler("stage2.pooler", cfg.d, scale, rng);
  const int in = cfg.d + (cfg.use_textual_conditioning ? stage1->latent_width() : 0);
  m.classifier = Affine("stage2.classifier", in, classes,
                        cfg.init_gain / std::sqrt(static_cast<double>(in)), rng);
  m.stage1_checksum = checksum(stage1->parameters());
  m.stage1 = std::move(stage1);
  return m;
}

RowVector pooled_textual(const Stage1Model& stage1, const LayerStack& layers) {
  return textual_latent(stage1, layers).colwise().mean();
}

namespace {

RowVector classifier_input(const Stage2Model& model, const RowVector& acoustic,
                           const RowVector& textual) {
  if (!model.config.use_textual_conditioning) return acoustic;
  RowVector x(acoustic.size() + textual.size());
  x << acoustic, textual;
  return x;
}

}  // namespace

StepResult stage2_forward_backward(Stage2Model& model, const LayerStack& layers,
                                   const RowVector& textual, int label, const Matrix& eps,
                                   double beta) {
  const Matrix x = model.input(layers);
  EncoderCache cache;
  const GaussianLatent latent = encode_bottleneck(x, model.encoder, &cache);
  const Matrix z = reparameterize(latent, eps);
  const PoolResult pool = attention_pool(z, model.pooler);
  const RowVector feat = classifier_input(model, pool.pooled, textual);
  const RowVector logits = model.classifier.forward_row(feat);
  const RowVector probs = softmax_row(logits);

  StepResult r;
  r.task_loss = -std::log(std::max(probs(label), 1e-300));
  r.kl = latent.mean.allFinite() && latent.std.allFinite()
             ? gaussian_kl(latent)
             : std::numeric_limits<double>::quiet_NaN();
  r.loss = r.task_loss + beta * r.kl;
  if (!std::isfinite(r.loss)) return r;

  RowVector d_logits = probs;
  d_logits(label) -= 1.0;
  const RowVector d_feat = model.classifier.backward_row(feat, d_logits);
  const Matrix dz = attention_pool_backward(z, model.pooler, pool, d_feat.head(model.latent_width()));
  const KlGradient kl = gaussian_kl_grad(latent);
  const Matrix d_mean = dz + beta * kl.d_mean;
  const Matrix d_std = dz.cwiseProduct(eps) + beta * kl.d_std;
  const Matrix dx = encode_bottleneck_backward(x, model.encoder, cache, latent, d_mean, d_std);
  if (!model.config.fixed_layer && layers.size() > 1) {
    const Vector w = layer_weights(model.layer_logits.value.col(0));
    model.layer_logits.grad.col(0) += layer_mix_backward(layers, w, dx);
  }
  return r;
}

std::vector<std::size_t> balanced_subset(std::span<const std::size_t> items,
                                         std::span<const int> labels, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < items.size(); ++i) by_class[labels[i]].push_back(items[i]);
  std::size_t smallest = items.size();
  for (const auto& [_, members] : by_class) smallest = std::min(smallest, members.size());
  std::vector<std::size_t> out;
  for (auto& [_, members] : by_class) {
    shuffle_in_place(members, rng);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<long>(smallest));
  }
  shuffle_in_place(out, rng);
  return out;
}

Stage2Model train_stage2(const Corpus& corpus, std::span<const std::size_t> train,
                         std::shared_ptr<const Stage1Model> stage1, const Stage2Config& cfg,
                         Stage2Log* log) {
  if (!stage1) throw ConfigError("stage2: a stage-1 model is required");
  const CorpusFingerprint fp = fingerprint(corpus);
  if (fp.representation_key() != stage1->corpus.representation_key())
    throw ConfigError("stage2: corpus representations '" + fp.representation_key() +
                      "' do not match the stage-1 checkpoint's '" +
                      stage1->corpus.representation_key() + "'");
  const int classes = class_count(corpus, cfg.task);
  Stage2Model model = init_stage2(stage1, corpus.layer_count(), corpus.width(), classes, cfg);
  model.corpus = fp;

  struct Item {
    const UtteranceRecord* record;
    LayerStack layers;
    RowVector textual;
    int label;
  };
  std::vector<Item> items;
  long skipped = 0;
  for (std::size_t idx : train) {
    const UtteranceRecord& r = corpus.records.at(idx);
    const auto y = r.labels.get(cfg.task);
    if (!y) {
      spdlog::warn("stage2: skipping '{}': no {} label", r.id, task_name(cfg.task));
      ++skipped;
      continue;
    }
    LayerStack layers = to_layer_stack(load_hidden_states(r));
    RowVector textual = pooled_textual(*stage1, layers);
    items.push_back({&r, std::move(layers), std::move(textual), *y});
  }
  if (items.empty()) throw InvalidInput("stage2: no labelled training utterances");

  std::vector<std::size_t> all(items.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> labels(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) labels[i] = items[i].label;

  Rng rng(derive_seed(cfg.seed, 12));
  const bool balance = cfg.undersampling_enabled();
  std::size_t per_epoch = items.size();
  if (balance) {
    Rng probe = rng;
    per_epoch = balanced_subset(all, labels, probe).size();
  }
  const long batches_per_epoch =
      static_cast<long>((per_epoch + static_cast<std::size_t>(cfg.batch_size) - 1) /
                        static_cast<std::size_t>(cfg.batch_size));
  const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;
  // The last executed step (total_steps - 1) runs at beta_end.
  const BetaSchedule schedule{cfg.beta_start, cfg.beta_end, std::max(1L, total_steps - 1)};
  const ParamRefs params = model.trainable();
  AdamW opt(params, cfg.optim, total_steps);

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order;
    if (balance) {
      order = balanced_subset(all, labels, rng);
    } else {
      order = all;
      shuffle_in_place(order, rng);
    }
    double sum_loss = 0.0, sum_task = 0.0, sum_kl = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double beta = cfg.beta_constant ? *cfg.beta_constant : beta_at(step, schedule);
      if (log) {
        if (step == 0) log->first_beta = beta;
        log->last_beta = beta;
      }
      for (std::size_t k = start; k < end; ++k) {
        const Item& item = items[order[k]];
        const Matrix eps = gaussian_matrix(item.layers.front().rows(), cfg.d, 1.0, rng);
        const StepResult r =
            stage2_forward_backward(model, item.layers, item.textual, item.label, eps, beta);
        if (!std::isfinite(r.loss)) {
          std::ostringstream msg;
          msg << "stage2 diverged at epoch " << epoch << ", step " << step << " on '"
              << item.record->id << "': ce=" << r.task_loss << " kl=" << r.kl
              << " beta=" << beta << " lr=" << opt.current_lr();
          throw DivergenceError(msg.str());
        }
        sum_loss += r.loss;
        sum_task += r.task_loss;
        sum_kl += r.kl;
      }
      scale_grads(params, 1.0 / static_cast<double>(end - start));
      opt.step();
      ++step;
    }
    const double n = static_cast<double>(order.size());
    if (log) {
      log->epoch_loss.push_back(sum_loss / n);
      log->epoch_task_loss.push_back(sum_task / n);
      log->epoch_kl.push_back(sum_kl / n);
      log->layer_weights.push_back(model.layer_weight_values());
    }
    spdlog::debug("stage2 epoch {}: loss {:.4f} ce {:.4f} kl {:.4f}", epoch, sum_loss / n,
                  sum_task / n, sum_kl / n);
  }
  if (log) {
    log->steps = step;
    log->skipped = skipped;
  }
  if (checksum(model.stage1->parameters()) != model.stage1_checksum)
    throw Error("stage2: frozen stage-1 parameters changed during training");
  return model;
}

Matrix acoustic_latent(const Stage2Model& model, const LayerStack& layers) {
  return inference_latent(encode_bottleneck(model.input(layers), model.encoder));
}

Prediction predict(const Stage2Model& model, const LayerStack& layers) {
  const Matrix z = acoustic_latent(model, layers);
  const PoolResult pool = attention_pool(z, model.pooler);
  RowVector textual;
  if (model.config.use_textual_conditioning) textual = pooled_textual(*model.stage1, layers);
  const RowVector logits = model.classifier.forward_row(classifier_input(model, pool.pooled, textual));
  return {softmax_row(logits).transpose(), pool.weights};
}

Prediction predict(const Stage2Model& model, const HiddenStateTensor& h) {
  return predict(model, to_layer_stack(h));
}

Stage2Metrics eval_stage2(const Stage2Model& model, const Corpus& corpus,
                          std::span<const std::size_t> indices) {
  Stage2Metrics m;
  double correct = 0.0, kl_total = 0.0, frames = 0.0;
  for (std::size_t idx : indices) {
    const UtteranceRecord& r = corpus.records.at(idx);
    const auto y = r.labels.get(model.config.task);
    if (!y) continue;
    const LayerStack layers = to_layer_stack(load_hidden_states(r));
    const Prediction p = predict(model, layers);
    Eigen::Index best = 0;
    p.probabilities.maxCoeff(&best);
    if (best == *y) correct += 1.0;
    const GaussianLatent latent = encode_bottleneck(model.input(layers), model.encoder);
    kl_total += gaussian_kl(latent) * static_cast<double>(latent.frames());
    frames += static_cast<double>(latent.frames());
    ++m.utterances;
  }
  if (m.utterances == 0) return m;
  m.accuracy = correct / static_cast<double>(m.utterances);
  m.kl_per_frame = kl_total / frames;
  return m;
}

}  // namespace vibsplit
