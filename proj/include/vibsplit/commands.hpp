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
#include <optional>
#include <vector>

#include "vibsplit/config.hpp"

namespace vibsplit {

// Corpus named by the run configuration: a manifest on disk, or an in-memory
// synthetic corpus. The lexicon is the configured file, lexicon.tsv next to
// the manifest, or the synthetic lexicon.
struct RunCorpus {
  Corpus corpus;
  std::optional<PolarityLexicon> lexicon;
  Split split;
};
RunCorpus load_run_corpus(const RunConfig& cfg);

// Output layout under cfg.out.
std::filesystem::path checkpoints_dir(const RunConfig& cfg);
std::filesystem::path reports_dir(const RunConfig& cfg);
std::filesystem::path tables_dir(const RunConfig& cfg);
std::filesystem::path default_stage1_path(const RunConfig& cfg, std::optional<int> layer);
std::filesystem::path default_stage2_path(const RunConfig& cfg, Task task, std::optional<int> layer);

// Writes out/corpus/ (manifest, tensors, vocab, lexicon).
void cmd_synth(const RunConfig& cfg);

// Stage 2 needs a stage-1 checkpoint (in sweep mode: the directory holding
// the per-layer stage1_layer<l> checkpoints).
void cmd_train(const RunConfig& cfg, int stage, const std::optional<std::filesystem::path>& stage1);

void cmd_probe(const RunConfig& cfg, const std::filesystem::path& stage1,
               const std::vector<std::filesystem::path>& stage2);

void cmd_attribute(const RunConfig& cfg, const std::filesystem::path& stage2);

void cmd_export_latents(const RunConfig& cfg, const std::filesystem::path& stage2);

// 2 config, 3 data, 4 divergence, 1 anything else.
int exit_code(const std::exception& e);

}  // namespace vibsplit
