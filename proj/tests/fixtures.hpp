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

// Shared small corpora for unit tests; built once per process.
#pragma once

#include <memory>

#include "vibsplit/stage1.hpp"
#include "vibsplit/stage2.hpp"
#include "vibsplit/synth.hpp"

namespace fixture {

using namespace vibsplit;

inline SynthConfig small_config() {
  SynthConfig c;
  c.utterance_count = 400;
  c.seed = 11;
  return c;
}

inline const SynthCorpus& small_corpus() {
  static const SynthCorpus s = synth_generate(small_config());
  return s;
}

inline const Split& small_split() {
  static const Split s = split_by_id(small_corpus().corpus);
  return s;
}

inline Stage1Config quick_stage1(int epochs = 5) {
  Stage1Config c;
  c.epochs = epochs;
  c.seed = 3;
  return c;
}

inline std::shared_ptr<const Stage1Model> small_stage1() {
  static const auto m = std::make_shared<const Stage1Model>(
      train_stage1(small_corpus().corpus, small_split().train, quick_stage1()));
  return m;
}

inline std::vector<int> labels(const Corpus& c, Task task) {
  std::vector<int> out;
  for (const auto& r : c.records) out.push_back(r.labels.get(task).value_or(-1));
  return out;
}

inline std::vector<std::string> transcripts(const Corpus& c) {
  std::vector<std::string> out;
  for (const auto& r : c.records) out.push_back(r.transcript);
  return out;
}

}  // namespace fixture
