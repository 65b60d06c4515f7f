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

#include <fstream>

#include "fixtures.hpp"
#include "temp_dir.hpp"
#include "vibsplit/checkpoint.hpp"
#include "vibsplit/error.hpp"

using namespace vibsplit;

namespace {

bool same_params(const ConstParamRefs& a, const ConstParamRefs& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i]->name != b[i]->name || a[i]->value != b[i]->value) return false;
  return true;
}

}  // namespace

TEST_CASE("stage1 checkpoint round trip is bit-exact") {
  TempDir dir("ckpt1");
  const auto& m = *fixture::small_stage1();
  save_stage1(m, dir.path / "s1");
  CHECK(checkpoint_kind(dir.path / "s1") == "stage1");
  const Stage1Model back = load_stage1(dir.path / "s1");
  CHECK(same_params(m.parameters(), back.parameters()));
  CHECK(back.vocab.symbols() == m.vocab.symbols());
  CHECK(back.corpus == m.corpus);
  CHECK(back.config.d == m.config.d);
  CHECK(back.config.epochs == m.config.epochs);
  CHECK(back.config.seed == m.config.seed);
  const auto& h = *fixture::small_corpus().corpus.records.front().hidden;
  CHECK(transcribe(back, h) == transcribe(m, h));
}

TEST_CASE("stage2 checkpoint round trip embeds stage1") {
  TempDir dir("ckpt2");
  const auto& s = fixture::small_corpus();
  Stage2Config cfg;
  cfg.task = Task::Speaker;
  cfg.epochs = 1;
  cfg.fixed_layer = 1;
  const Stage2Model m = train_stage2(s.corpus, fixture::small_split().train, fixture::small_stage1(), cfg);
  save_stage2(m, dir.path / "s2");
  CHECK(checkpoint_kind(dir.path / "s2") == "stage2");
  const Stage2Model back = load_stage2(dir.path / "s2");
  CHECK(same_params(m.parameters(), back.parameters()));
  CHECK(same_params(m.stage1->parameters(), back.stage1->parameters()));
  CHECK(back.stage1_checksum == m.stage1_checksum);
  CHECK(back.class_count == m.class_count);
  CHECK(back.config.task == Task::Speaker);
  CHECK(back.config.fixed_layer == 1);
  const auto& h = *s.corpus.records.front().hidden;
  CHECK(predict(back, h).probabilities == predict(m, h).probabilities);
}

TEST_CASE("corrupted checkpoints are rejected") {
  TempDir dir("ckpt3");
  save_stage1(*fixture::small_stage1(), dir.path / "s1");
  SUBCASE("tensor bytes changed") {
    const auto tensors = dir.path / "s1" / "tensors";
    const auto first = std::filesystem::directory_iterator(tensors)->path();
    std::fstream f(first, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
    f.close();
    CHECK_THROWS_AS(load_stage1(dir.path / "s1"), FormatError);
  }
  SUBCASE("index missing") {
    std::filesystem::remove(dir.path / "s1" / "index.json");
    CHECK_THROWS_AS(load_stage1(dir.path / "s1"), FormatError);
  }
  SUBCASE("wrong kind") { CHECK_THROWS_AS(load_stage2(dir.path / "s1"), FormatError); }
}
