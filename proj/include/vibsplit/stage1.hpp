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

#include <optional>
#include <span>
#include <vector>

#include "vibsplit/ctc.hpp"
#include "vibsplit/data.hpp"
#include "vibsplit/optim.hpp"
#include "vibsplit/vib.hpp"

namespace vibsplit {

// Bottleneck widths swept in the reference experiments.
inline const std::vector<int> kDefaultBottleneckWidths{16, 32, 64, 128, 256};

struct Stage1Config {
  int d = 16;
  int epochs = 50;
  OptimConfig optim;
  double beta_start = 0.1;
  double beta_end = 1.0;
  // Replaces the annealed weight for the whole run; 0 drops the information
  // loss (the probing baseline).
  std::optional<double> beta_constant;
  double init_gain = 1.0;
  // Initial CTC-head bias on the blank so an untrained model emits nothing.
  double blank_bias = 2.0;
  // nullopt: learned softmax layer average; otherwise a single layer.
  std::optional<int> fixed_layer;
  std::uint64_t seed = 0;
  std::vector<int> allowed_d = kDefaultBottleneckWidths;
};

// Layer mixing -> bottleneck encoder -> linear CTC head.
struct Stage1Model {
  Param layer_logits;  // [L x 1]
  BottleneckEncoderParams encoder;
  Affine ctc_head;  // d -> C
  Stage1Config config;
  Vocabulary vocab;
  CorpusFingerprint corpus;

  int latent_width() const { return static_cast<int>(encoder.latent_width()); }
  int layer_count() const { return static_cast<int>(layer_logits.value.rows()); }
  // Softmax weights, or a one-hot vector in fixed-layer mode.
  Vector layer_weight_values() const;
  // Encoder input for one utterance.
  Matrix input(const LayerStack& layers) const;

  ParamRefs trainable();
  ConstParamRefs parameters() const;
};

Stage1Model init_stage1(std::uint32_t layers, std::uint32_t width, const Vocabulary& vocab,
                        const Stage1Config& cfg);

struct StepResult {
  double loss = 0.0;
  double task_loss = 0.0;
  double kl = 0.0;
};

// One utterance: forward with the given noise, loss = CTC + beta * KL, and
// gradient accumulation into the model's trainable parameters.
StepResult stage1_forward_backward(Stage1Model& model, const LayerStack& layers,
                                   std::span<const int> target, const Matrix& eps, double beta);

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_task_loss;
  std::vector<double> epoch_kl;
  std::vector<Vector> layer_weights;  // after each epoch
  long steps = 0;
  long skipped = 0;
  double first_beta = 0.0;  // weight applied at the first and last step
  double last_beta = 0.0;
};

// Trains on corpus.records[train]. Infeasible CTC targets are skipped with a
// warning; a non-finite loss raises DivergenceError.
Stage1Model train_stage1(const Corpus& corpus, std::span<const std::size_t> train,
                         const Stage1Config& cfg, TrainLog* log = nullptr);

struct Stage1Metrics {
  double wer = 0.0;
  double cer = 0.0;
  double kl_per_frame = 0.0;
  std::size_t utterances = 0;
};

// Deterministic: posterior means only.
Stage1Metrics eval_stage1(const Stage1Model& model, const Corpus& corpus,
                          std::span<const std::size_t> indices);

// Frame-level textual latents (posterior means), [frames x d].
Matrix textual_latent(const Stage1Model& model, const HiddenStateTensor& h);
Matrix textual_latent(const Stage1Model& model, const LayerStack& layers);

std::string transcribe(const Stage1Model& model, const HiddenStateTensor& h);

}  // namespace vibsplit
