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

#include <doctest.h>

#include <map>

#include "fixtures.hpp"
#include "vibsplit/error.hpp"
#include "vibsplit/probing.hpp"

using namespace vibsplit;

TEST_CASE("synth is deterministic given the seed") {
  SynthConfig c = fixture::small_config();
  c.utterance_count = 50;
  const SynthCorpus a = synth_generate(c), b = synth_generate(c);
  REQUIRE(a.corpus.records.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& ra = a.corpus.records[i];
    const auto& rb = b.corpus.records[i];
    CHECK(ra.id == rb.id);
    CHECK(ra.transcript == rb.transcript);
    CHECK(*ra.hidden == *rb.hidden);
    CHECK(ra.labels.speaker == rb.labels.speaker);
    CHECK(ra.pitch == rb.pitch);
  }
  c.seed += 1;
  CHECK_FALSE(*synth_generate(c).corpus.records[0].hidden == *a.corpus.records[0].hidden);
}

TEST_CASE("synth records are internally consistent") {
  const Corpus& c = fixture::small_corpus().corpus;
  for (const auto& r : c.records) {
    CHECK_NOTHROW(validate_record(r, c.vocab));
    REQUIRE(r.word_timings.has_value());
    CHECK(r.word_timings->size() == split_words(r.transcript).size());
    CHECK(r.hidden->frame_count() >= static_cast<std::uint32_t>(ctc_required_frames(c.vocab.encode(r.transcript))));
  }
}

TEST_CASE("speaker is independent of the transcript") {
  SynthConfig c;
  c.utterance_count = 2000;
  const Corpus corpus = synth_generate(c).corpus;
  std::map<std::string, int> ids;
  std::vector<int> speaker, sentence;
  for (const auto& r : corpus.records) {
    speaker.push_back(*r.labels.speaker);
    sentence.push_back(ids.try_emplace(r.transcript, static_cast<int>(ids.size())).first->second);
  }
  CHECK(std::abs(cramers_v(speaker, sentence)) < 0.1);
}

TEST_CASE("cramers_v on perfectly dependent and constant inputs") {
  std::vector<int> a, b;
  for (int i = 0; i < 400; ++i) {
    a.push_back(i % 4);
    b.push_back((i % 4) * 10);
  }
  CHECK(cramers_v(a, b) > 0.95);
}

TEST_CASE("raw features entangle speaker identity") {
  const auto& s = fixture::small_corpus();
  ProbeConfig pc;
  pc.epochs = 10;
  const auto r = probe_utterance(raw_representations(s.corpus), fixture::labels(s.corpus, Task::Speaker),
                                 8, fixture::small_split().train, fixture::small_split().test, pc);
  CHECK(r.value > 3.0 * r.chance);
}

TEST_CASE("invalid synth configs are rejected") {
  SynthConfig c;
  c.speaker_count = 1;
  CHECK_THROWS_AS(synth_generate(c), ConfigError);
  c = SynthConfig{};
  c.informative_layer = c.layer_count;
  CHECK_THROWS_AS(synth_generate(c), ConfigError);
}
