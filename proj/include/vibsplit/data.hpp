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

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vibsplit/ctc.hpp"
#include "vibsplit/tensor_io.hpp"
#include "vibsplit/types.hpp"

namespace vibsplit {

struct WordTiming {
  std::string word;
  double start = 0.0;  // seconds
  double end = 0.0;
};

enum class Task { Emotion, Speaker, Gender };

const char* task_name(Task task);
Task parse_task(std::string_view name);

struct UtteranceLabels {
  std::optional<int> emotion;
  std::optional<int> speaker;
  std::optional<int> gender;

  std::optional<int> get(Task task) const;
};

struct WaveformRef {
  std::filesystem::path path;  // headerless little-endian float32 PCM
  double sample_rate = 16000.0;
};

struct UtteranceRecord {
  std::string id;
  std::string transcript;
  UtteranceLabels labels;
  std::optional<std::vector<double>> pitch;      // Hz per frame, 0 = unvoiced
  std::optional<std::vector<double>> intensity;  // dB-like log energy per frame
  std::optional<std::vector<WordTiming>> word_timings;
  double duration = 0.0;  // seconds

  // Declared [L, T, D]; zero when the manifest omits it.
  std::array<std::uint32_t, 3> shape{0, 0, 0};
  // Either an inline tensor or a path to an HST1 file.
  std::shared_ptr<const HiddenStateTensor> hidden;
  std::filesystem::path hidden_path;
  std::optional<WaveformRef> waveform;

  std::uint32_t frame_count() const { return shape[1]; }
};

// Checks transcript symbols, series lengths and word-timing bounds. Throws
// InvalidInput naming the offending field.
void validate_record(const UtteranceRecord& record, const Vocabulary& vocab);

// Inline tensor if present, otherwise reads and checks the referenced file
// against the declared shape. Throws FormatError on mismatch.
HiddenStateTensor load_hidden_states(const UtteranceRecord& record);

struct Corpus {
  Vocabulary vocab;
  std::vector<UtteranceRecord> records;
  // Name of the upstream representation family (model id); part of the
  // fingerprint that ties stage-2 training to a stage-1 checkpoint.
  std::string source = "unknown";

  std::size_t size() const { return records.size(); }
  // Reads every referenced tensor into memory.
  void materialize();
  std::uint32_t layer_count() const;
  std::uint32_t width() const;
};

// JSON Lines manifest; hidden_ref paths resolve against the manifest's folder.
// Malformed rows raise FormatError naming the line and field.
std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path,
                                           const Vocabulary& vocab);
// Loads `manifest.jsonl`-style files plus a vocabulary (defaults to vocab.txt
// next to the manifest).
Corpus load_corpus(const std::filesystem::path& manifest,
                   const std::optional<std::filesystem::path>& vocab_path = std::nullopt);
// Writes manifest.jsonl, vocab.txt and hidden/<id>.hst under `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct CorpusFingerprint {
  std::string source;
  std::uint32_t layers = 0;
  std::uint32_t width = 0;
  std::uint64_t content = 0;  // ids, transcripts, labels and shapes

  // Identifies the upstream representation family (source, L, D).
  std::string representation_key() const;
  bool operator==(const CorpusFingerprint&) const = default;
};

CorpusFingerprint fingerprint(const Corpus& corpus);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Deterministic split by a hash of the utterance id (about 80/20).
Split split_by_id(const Corpus& corpus, double test_fraction = 0.2);

using LayerStack = std::vector<Matrix>;

LayerStack to_layer_stack(const HiddenStateTensor& h);

// Softmax-normalized layer weights.
Vector layer_weights(const Vector& layer_logits);
// Convex combination of layers under softmax(layer_logits).
Matrix layer_mix(const HiddenStateTensor& h, const Vector& layer_logits);
Matrix layer_mix(const LayerStack& layers, const Vector& layer_logits);
// dL/dlogits given dL/dmix.
Vector layer_mix_backward(const LayerStack& layers, const Vector& weights, const Matrix& d_mix);

Matrix select_layer(const HiddenStateTensor& h, int layer);

}  // namespace vibsplit
