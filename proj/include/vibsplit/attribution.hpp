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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vibsplit/features.hpp"
#include "vibsplit/lexicon.hpp"
#include "vibsplit/probing.hpp"

namespace vibsplit {

struct ExtremaOptions {
  int window = 5;           // odd, >= 3
  double prominence = 0.1;  // fraction of the series range
};

// 1 where a frame is a strict maximum or minimum of its window whose
// prominence reaches `prominence * range`; 0 elsewhere. Frames with a false
// mask entry are dropped before detection and reported as 0.
std::vector<double> detect_extrema(std::span<const double> series, const ExtremaOptions& options = {},
                                   std::span<const bool> mask = {});

// |polarity| over each word's inclusive frame span; overlaps keep the larger
// magnitude.
std::vector<double> polarity_frames(std::span<const WordTiming> timings,
                                    const PolarityLexicon& lexicon, double total_time, int frames);

// F(x) plus its gradient with respect to x when `grad` is non-null.
using DifferentiableScalar = std::function<double(const Matrix& x, Matrix* grad)>;

struct IgResult {
  Matrix attributions;        // same shape as the input
  std::vector<double> scores;  // per row, |sum over columns|, normalised to sum 1
  double total = 0.0;          // sum of attributions
  double delta = 0.0;          // F(x) - F(baseline)
  bool degenerate = false;     // all-zero attributions; scores fall back to uniform
};

// Midpoint-rule integrated gradients along the straight path from `baseline`.
IgResult integrated_gradients(const DifferentiableScalar& f, const Matrix& x,
                              const Matrix& baseline, int steps = 64);

// Predicted-class logit of an utterance probe over raw hidden states, as a
// function of the [frames x (L*D)] matrix of concatenated layers.
Matrix concat_layers(const LayerStack& layers);
DifferentiableScalar probe_logit(const UtteranceProbe& probe, std::size_t layer_count, int cls);

struct TextualAttention {
  UtteranceProbe probe;
  ProbeResult result;
};

// Attention-pooled task probe on frozen z^textual; its pooling weights serve
// as textual attention scores.
TextualAttention train_textual_attention(const RepresentationSet& textual,
                                         std::span<const int> labels, int classes,
                                         std::span<const std::size_t> train,
                                         std::span<const std::size_t> test, const ProbeConfig& cfg);
std::vector<Vector> textual_attention_scores(const TextualAttention& model,
                                             const RepresentationSet& textual,
                                             std::span<const std::size_t> records);

// Dot product of a score vector with one feature dimension.
double agreement(std::span<const double> scores, std::span<const double> feature);

inline const std::vector<std::string> kScoreMethods{"acoustic", "textual", "ig", "uniform"};
inline const std::vector<std::string> kFeatureNames{"intensity_extremum", "pitch_extremum",
                                                    "polarity"};

struct AttributionResult {
  std::string id;
  std::map<std::string, std::vector<double>> scores;                    // by method
  std::map<std::string, std::optional<std::vector<double>>> features;  // by feature
  std::map<std::string, std::map<std::string, double>> agreements;     // method -> feature

  std::size_t frames() const;
  void compute_agreements();
  std::string to_json() const;
  std::string to_csv() const;
};

struct AgreementTable {
  // method -> feature -> (sum, count)
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> cells;

  void add(const AttributionResult& result);
  double mean(const std::string& method, const std::string& feature) const;
  std::string to_csv() const;
};

struct AttributionInputs {
  const Stage2Model* acoustic = nullptr;
  const TextualAttention* textual = nullptr;
  const UtteranceProbe* ig_classifier = nullptr;
  const PolarityLexicon* lexicon = nullptr;
  ExtremaOptions extrema;
  int ig_steps = 64;
};

// Scores and frame features for one record. Missing frame series or word
// timings leave the corresponding feature empty.
AttributionResult attribute_record(const UtteranceRecord& record, const LayerStack& layers,
                                   const AttributionInputs& inputs);

}  // namespace vibsplit
