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

#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "vibsplit/attention.hpp"
#include "vibsplit/stage1.hpp"

namespace vibsplit {

struct Stage2Config {
  Task task = Task::Emotion;
  int d = 16;
  int epochs = 50;
  int batch_size = 8;
  OptimConfig optim;
  double beta_start = 0.1;
  double beta_end = 1.0;
  std::optional<double> beta_constant;
  double init_gain = 1.0;
  std::optional<int> fixed_layer;
  // Class-balanced undersampling, redrawn every epoch. Default: emotion only.
  std::optional<bool> undersample;
  // Ablation switch: drop the frozen textual input to the classifier.
  bool use_textual_conditioning = true;
  std::uint64_t seed = 0;
  std::vector<int> allowed_d = kDefaultBottleneckWidths;

  bool undersampling_enabled() const { return undersample.value_or(task == Task::Emotion); }
};

// Layer mixing -> bottleneck encoder -> attention pooling, concatenated with
// the mean-pooled frozen textual latent, -> linear classifier.
struct Stage2Model {
  Param layer_logits;  // [L x 1]
  BottleneckEncoderParams encoder;
  AttentionPooler pooler;
  Affine classifier;
  Stage2Config config;
  int class_count = 0;
  std::shared_ptr<const Stage1Model> stage1;
  std::uint64_t stage1_checksum = 0;
  CorpusFingerprint corpus;

  int latent_width() const { return static_cast<int>(encoder.latent_width()); }
  int layer_count() const { return static_cast<int>(layer_logits.value.rows()); }
  Vector layer_weight_values() const;
  Matrix input(const LayerStack& layers) const;

  ParamRefs trainable();
  ConstParamRefs parameters() const;
};

// Number of classes for `task`: one past the largest label present.
int class_count(const Corpus& corpus, Task task);

Stage2Model init_stage2(std::shared_ptr<const Stage1Model> stage1, std::uint32_t layers,
                        std::uint32_t width, int class_count, const Stage2Config& cfg);

// Frozen textual input: stage-1 posterior means averaged over frames.
RowVector pooled_textual(const Stage1Model& stage1, const LayerStack& layers);

// Accumulates gradients for one utterance; `textual` is the pooled textual
// latent (ignored without conditioning).
StepResult stage2_forward_backward(Stage2Model& model, const LayerStack& layers,
                                   const RowVector& textual, int label, const Matrix& eps,
                                   double beta);

struct Stage2Log {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_task_loss;
  std::vector<double> epoch_kl;
  std::vector<Vector> layer_weights;
  long steps = 0;
  long skipped = 0;
  double first_beta = 0.0;  // weight applied at the first and last step
  double last_beta = 0.0;
};

// Refuses (ConfigError) when the corpus comes from a different representation
// family than the stage-1 model.
Stage2Model train_stage2(const Corpus& corpus, std::span<const std::size_t> train,
                         std::shared_ptr<const Stage1Model> stage1, const Stage2Config& cfg,
                         Stage2Log* log = nullptr);

struct Prediction {
  Vector probabilities;
  Vector attention;  // over frames
};

Prediction predict(const Stage2Model& model, const HiddenStateTensor& h);
Prediction predict(const Stage2Model& model, const LayerStack& layers);

// Frame-level acoustic latents (posterior means), [frames x d].
Matrix acoustic_latent(const Stage2Model& model, const LayerStack& layers);

struct Stage2Metrics {
  double accuracy = 0.0;
  double kl_per_frame = 0.0;
  std::size_t utterances = 0;
};

Stage2Metrics eval_stage2(const Stage2Model& model, const Corpus& corpus,
                          std::span<const std::size_t> indices);

// Equal-count subset per class (the smallest class size), shuffled.
std::vector<std::size_t> balanced_subset(std::span<const std::size_t> items,
                                         std::span<const int> labels, Rng& rng);

}  // namespace vibsplit
