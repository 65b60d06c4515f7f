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

#include "vibsplit/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "vibsplit/error.hpp"

namespace vibsplit {

Vector Stage1Model::layer_weight_values() const {
  if (config.fixed_layer) {
    Vector w = Vector::Zero(layer_logits.value.rows());
    w(*config.fixed_layer) = 1.0;
    return w;
  }
  return layer_weights(layer_logits.value.col(0));
}

Matrix Stage1Model::input(const LayerStack& layers) const {
  if (static_cast<int>(layers.size()) != layer_count())
    throw InvalidInput("stage1: model expects " + std::to_string(layer_count()) + " layers, got " +
                       std::to_string(layers.size()));
  if (config.fixed_layer) return layers[static_cast<std::size_t>(*config.fixed_layer)];
  return layer_mix(layers, layer_logits.value.col(0));
}

ParamRefs Stage1Model::trainable() {
  ParamRefs out;
  if (!config.fixed_layer) out.push_back(&layer_logits);
  encoder.collect(out);
  ctc_head.collect(out);
  return out;
}

ConstParamRefs Stage1Model::parameters() const {
  ConstParamRefs out{&layer_logits};
  encoder.collect(out);
  ctc_head.collect(out);
  return out;
}

Stage1Model init_stage1(std::uint32_t layers, std::uint32_t width, const Vocabulary& vocab,
                        const Stage1Config& cfg) {
  if (cfg.d < 1) throw ConfigError("stage1: bottleneck width must be positive");
  if (!cfg.allowed_d.empty() &&
      std::find(cfg.allowed_d.begin(), cfg.allowed_d.end(), cfg.d) == cfg.allowed_d.end())
    throw ConfigError("stage1: bottleneck width " + std::to_string(cfg.d) +
                      " is not in the configured set");
  if (cfg.epochs < 1) throw ConfigError("stage1: epochs must be positive");
  if (cfg.fixed_layer && (*cfg.fixed_layer < 0 || *cfg.fixed_layer >= static_cast<int>(layers)))
    throw ConfigError("stage1: layer " + std::to_string(*cfg.fixed_layer) + " out of range");
  Rng rng(derive_seed(cfg.seed, 1));
  Stage1Model m;
  m.config = cfg;
  m.vocab = vocab;
  m.layer_logits = Param("stage1.layer_logits", Matrix::Zero(layers, 1), false);
  m.encoder = BottleneckEncoderParams("stage1.encoder", width, cfg.d, cfg.init_gain, rng);
  m.ctc_head = Affine("stage1.ctc_head", cfg.d, vocab.size(),
                      cfg.init_gain / std::sqrt(static_cast<double>(cfg.d)), rng);
  m.ctc_head.bias.value(vocab.blank_index(), 0) = cfg.blank_bias;
  return m;
}

StepResult stage1_forward_backward(Stage1Model& model, const LayerStack& layers,
                                   std::span<const int> target, const Matrix& eps, double beta) {
  const Matrix x = model.input(layers);
  EncoderCache cache;
  const GaussianLatent latent = encode_bottleneck(x, model.encoder, &cache);
  const Matrix z = reparameterize(latent, eps);
  const Matrix logits = model.ctc_head.forward(z);
  const Matrix logprobs = log_softmax_rows(logits);
  CtcResult ctc = ctc_loss_and_grad(logprobs, target, model.vocab.blank_index());

  StepResult r;
  r.task_loss = ctc.loss;
  r.kl = latent.mean.allFinite() && latent.std.allFinite()
             ? gaussian_kl(latent)
             : std::numeric_limits<double>::quiet_NaN();
  r.loss = r.task_loss + beta * r.kl;
  if (!std::isfinite(r.loss)) return r;

  // Back through log-softmax: g - softmax * rowsum(g)
  const Matrix probs = logprobs.array().exp();
  const Vector row_sums = ctc.grad.rowwise().sum();
  const Matrix d_logits = ctc.grad - (probs.array().colwise() * row_sums.array()).matrix();
  const Matrix dz = model.ctc_head.backward(z, d_logits);

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

Stage1Model train_stage1(const Corpus& corpus, std::span<const std::size_t> train,
                         const Stage1Config& cfg, TrainLog* log) {
  if (train.empty()) throw InvalidInput("stage1: empty training set");
  Stage1Model model = init_stage1(corpus.layer_count(), corpus.width(), corpus.vocab, cfg);
  model.corpus = fingerprint(corpus);

  struct Item {
    const UtteranceRecord* record;
    LayerStack layers;
    LabelSequence target;
  };
  std::vector<Item> items;
  long skipped = 0;
  for (std::size_t idx : train) {
    const UtteranceRecord& r = corpus.records.at(idx);
    LabelSequence target = corpus.vocab.encode(r.transcript);
    HiddenStateTensor h = load_hidden_states(r);
    if (static_cast<int>(h.frame_count()) < ctc_required_frames(target)) {
      spdlog::warn("stage1: skipping '{}': transcript needs {} frames, utterance has {}", r.id,
                   ctc_required_frames(target), h.frame_count());
      ++skipped;
      continue;
    }
    items.push_back({&r, to_layer_stack(h), std::move(target)});
  }
  if (items.empty()) throw InvalidInput("stage1: no trainable utterances");

  const long total_steps = static_cast<long>(cfg.epochs) * static_cast<long>(items.size());
  // The last executed step (total_steps - 1) runs at beta_end.
  const BetaSchedule schedule{cfg.beta_start, cfg.beta_end, std::max(1L, total_steps - 1)};
  AdamW opt(model.trainable(), cfg.optim, total_steps);
  Rng rng(derive_seed(cfg.seed, 2));
  NormalSampler normal;
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    double sum_loss = 0.0, sum_task = 0.0, sum_kl = 0.0;
    for (std::size_t k : order) {
      const Item& item = items[k];
      const double beta = cfg.beta_constant ? *cfg.beta_constant : beta_at(step, schedule);
      if (log) {
        if (step == 0) log->first_beta = beta;
        log->last_beta = beta;
      }
      const Eigen::Index frames = item.layers.front().rows();
      Matrix eps(frames, cfg.d);
      for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
      const StepResult r = stage1_forward_backward(model, item.layers, item.target, eps, beta);
      if (!std::isfinite(r.loss)) {
        std::ostringstream msg;
        msg << "stage1 diverged at epoch " << epoch << ", step " << step << " on '"
            << item.record->id << "': ctc=" << r.task_loss << " kl=" << r.kl << " beta=" << beta
            << " lr=" << opt.current_lr();
        throw DivergenceError(msg.str());
      }
      opt.step();
      ++step;
      sum_loss += r.loss;
      sum_task += r.task_loss;
      sum_kl += r.kl;
    }
    const double n = static_cast<double>(items.size());
    if (log) {
      log->epoch_loss.push_back(sum_loss / n);
      log->epoch_task_loss.push_back(sum_task / n);
      log->epoch_kl.push_back(sum_kl / n);
      log->layer_weights.push_back(model.layer_weight_values());
    }
    spdlog::debug("stage1 epoch {}: loss {:.4f} ctc {:.4f} kl {:.4f}", epoch, sum_loss / n,
                  sum_task / n, sum_kl / n);
  }
  if (log) {
    log->steps = step;
    log->skipped = skipped;
  }
  return model;
}

Matrix textual_latent(const Stage1Model& model, const LayerStack& layers) {
  return inference_latent(encode_bottleneck(model.input(layers), model.encoder));
}

Matrix textual_latent(const Stage1Model& model, const HiddenStateTensor& h) {
  return textual_latent(model, to_layer_stack(h));
}

std::string transcribe(const Stage1Model& model, const HiddenStateTensor& h) {
  const Matrix z = textual_latent(model, h);
  return greedy_decode(log_softmax_rows(model.ctc_head.forward(z)), model.vocab);
}

Stage1Metrics eval_stage1(const Stage1Model& model, const Corpus& corpus,
                          std::span<const std::size_t> indices) {
  ErrorCounts counts;
  double kl_total = 0.0;
  double frames_total = 0.0;
  for (std::size_t idx : indices) {
    const UtteranceRecord& r = corpus.records.at(idx);
    const HiddenStateTensor h = load_hidden_states(r);
    const GaussianLatent latent = encode_bottleneck(model.input(to_layer_stack(h)), model.encoder);
    const Matrix logprobs = log_softmax_rows(model.ctc_head.forward(inference_latent(latent)));
    counts.add(r.transcript, greedy_decode(logprobs, model.vocab));
    kl_total += gaussian_kl(latent) * static_cast<double>(latent.frames());
    frames_total += static_cast<double>(latent.frames());
  }
  Stage1Metrics m;
  m.utterances = indices.size();
  if (indices.empty()) return m;
  m.wer = counts.wer();
  m.cer = counts.cer();
  m.kl_per_frame = kl_total / frames_total;
  return m;
}

}  // namespace vibsplit
