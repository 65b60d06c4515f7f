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

#include <cstdint>
#include <string>
#include <vector>

#include "vibsplit/data.hpp"
#include "vibsplit/lexicon.hpp"

namespace vibsplit {

// Desk-scale corpus with known factors: transcript, speaker (and gender),
// emotion, and frame-level pitch/intensity contours. Factors are sampled
// independently and entangled through a fixed random nonlinear mixing network.
struct SynthConfig {
  int vocab_size = 8;  // non-blank symbols, including the word delimiter
  int speaker_count = 8;
  int emotion_count = 4;
  int utterance_count = 2000;
  int frames_per_symbol_min = 2;
  int frames_per_symbol_max = 4;
  int width = 32;        // D
  int layer_count = 4;   // L
  int mixing_depth = 2;  // residual tanh blocks per layer
  double noise_scale = 0.1;
  std::uint64_t seed = 1;

  int sentence_count = 16;
  int lexicon_size = 24;
  int words_per_sentence_min = 2;
  int words_per_sentence_max = 3;
  int letters_per_word_min = 2;
  int letters_per_word_max = 4;
  int polar_word_count = 4;
  int silence_frames_min = 2;
  int silence_frames_max = 4;
  double frame_rate = 50.0;  // frames per second

  double symbol_gain = 1.0;
  double speaker_gain = 1.0;
  double emotion_gain = 1.0;
  double prosody_gain = 1.0;

  // Emotion becomes visible through localized pitch/intensity bumps and
  // polar words instead of utterance-wide statistics.
  bool planted_cues = false;
  // When >= 0, only this layer carries symbol identity.
  int informative_layer = -1;
  // Frame features are plain one-hot symbol codes (L = 1, D = vocab + 1).
  bool one_hot = false;

  // Throws ConfigError.
  void validate() const;
};

struct SynthCorpus {
  Corpus corpus;
  PolarityLexicon lexicon;
  std::vector<std::string> sentences;
};

SynthCorpus synth_generate(const SynthConfig& config);

// Writes the corpus (manifest + HST1 files + vocab) and lexicon.tsv to `dir`.
void materialize_synth(const SynthCorpus& synth, const std::filesystem::path& dir);

// Bias-corrected Cramer's V between two categorical label vectors.
double cramers_v(std::span<const int> a, std::span<const int> b);

}  // namespace vibsplit
