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

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vibsplit/attention.hpp"
#include "vibsplit/stage2.hpp"

namespace vibsplit {

struct ProbeConfig {
  int epochs = 50;
  int batch_size = 8;  // utterance probes; transcription probes update per utterance
  OptimConfig optim;
  double blank_bias = 2.0;
  std::uint64_t seed = 0;
};

// Per-record frame representations, indexed like the corpus. Single-layer
// stacks for latents; several layers get a learned softmax mix.
using RepresentationSet = std::vector<LayerStack>;

RepresentationSet raw_representations(const Corpus& corpus);
RepresentationSet textual_representations(const Stage1Model& model, const Corpus& corpus);
RepresentationSet acoustic_representations(const Stage2Model& model, const Corpus& corpus);

struct ProbeResult {
  std::string source;
  std::string task;
  std::string metric;  // "wer" or "accuracy"
  double value = 0.0;
  double chance = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;
  bool present = true;

  bool operator==(const ProbeResult&) const = default;
};

struct TranscriptionProbe {
  Param layer_logits;
  Affine head;
  Matrix input(const LayerStack& layers) const;
};

// Affine map to symbol logits trained with CTC (no bottleneck); held-out WER.
ProbeResult probe_transcription(const RepresentationSet& reps,
                                std::span<const std::string> transcripts, const Vocabulary& vocab,
                                std::span<const std::size_t> train,
                                std::span<const std::size_t> test, const ProbeConfig& cfg,
                                TranscriptionProbe* trained = nullptr);

struct UtteranceProbe {
  Param layer_logits;
  AttentionPooler pooler;
  Affine classifier;
  Matrix input(const LayerStack& layers) const;
  Prediction predict(const LayerStack& layers) const;
};

// Attention pooling + affine K-way classifier trained with cross-entropy;
// held-out accuracy. Labels < 0 mark missing values.
ProbeResult probe_utterance(const RepresentationSet& reps, std::span<const int> labels, int classes,
                            std::span<const std::size_t> train, std::span<const std::size_t> test,
                            const ProbeConfig& cfg, UtteranceProbe* trained = nullptr);

// Bucket = floor(rank * k / N); tied values share the bucket of their lowest
// rank, so a constant vector lands in bucket 0.
std::vector<int> quantile_bucketize(std::span<const double> values, int k = 4);

struct ProbeReport {
  std::vector<ProbeResult> entries;

  const ProbeResult* find(std::string_view source, std::string_view task) const;
  std::string to_json() const;
  static ProbeReport from_json(const std::string& text);
  std::string to_csv() const;
  void write(const std::filesystem::path& json_path, const std::filesystem::path& csv_path) const;
  bool operator==(const ProbeReport&) const = default;
};

// Mean pitch over voiced frames and mean intensity, bucketized into quartiles;
// nullopt when any record lacks the series.
std::optional<std::vector<int>> series_buckets(const Corpus& corpus, bool pitch, int k = 4);

// Transcription, intensity, pitch, gender and speaker probes on raw hidden
// states, z^textual and each stage-2 model's z^acoustic.
ProbeReport run_sanity_suite(const Stage1Model& stage1,
                             const std::vector<const Stage2Model*>& stage2, const Corpus& corpus,
                             const Split& split, const ProbeConfig& cfg);

}  // namespace vibsplit
