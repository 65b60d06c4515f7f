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
#include <string>

#include "vibsplit/stage2.hpp"

namespace vibsplit {

// A checkpoint is a directory: index.json (kind, config snapshot, corpus
// fingerprint, vocabulary, tensor list, parameter checksum) plus one HSD1
// file per parameter tensor. Stage-2 checkpoints carry their stage-1
// checkpoint in a `stage1/` subdirectory.
void save_stage1(const Stage1Model& model, const std::filesystem::path& dir);
Stage1Model load_stage1(const std::filesystem::path& dir);

void save_stage2(const Stage2Model& model, const std::filesystem::path& dir);
Stage2Model load_stage2(const std::filesystem::path& dir);

// "stage1" or "stage2"; FormatError when the index is missing or malformed.
std::string checkpoint_kind(const std::filesystem::path& dir);

}  // namespace vibsplit
