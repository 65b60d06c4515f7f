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

#include <string>
#include <vector>

#include "vibsplit/probing.hpp"

namespace vibsplit {

// Fixed-layer runs derive their seed from the base seed and the layer, so a
// sweep row matches a standalone run on that layer regardless of scheduling.
std::uint64_t layer_seed(std::uint64_t base, std::optional<int> layer);

struct LayerwiseConfig {
  Stage1Config stage1;
  Stage2Config stage2;
  ProbeConfig probe;
  Task probe_task = Task::Emotion;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct LayerRow {
  int layer = 0;
  Stage1Metrics stage1;
  Stage2Metrics stage2;
  double probe_textual = 0.0;
  double probe_acoustic = 0.0;
  double probe_raw = 0.0;
};

struct LayerSweepReport {
  std::vector<LayerRow> rows;
  std::string stage2_task;
  std::string probe_task;
  double wer_chance = 1.0;
  double stage2_chance = 0.0;
  double probe_chance = 0.0;

  std::string stage1_csv() const;
  std::string stage2_csv() const;
  std::string probe_csv() const;
  int best_stage1_layer() const;
};

// Stage 1 and stage 2 on layer `l` alone, then emotion probes on z^textual,
// z^acoustic and the raw layer. Models are returned through the optional
// pointers.
LayerRow run_layer(const Corpus& corpus, const Split& split, int layer, const LayerwiseConfig& cfg,
                   std::shared_ptr<const Stage1Model>* stage1_out = nullptr,
                   Stage2Model* stage2_out = nullptr);

// Emotion-style probes for a trained per-layer pair.
void probe_layer(const Corpus& corpus, const Split& split, int layer, const Stage1Model& stage1,
                 const Stage2Model& stage2, const LayerwiseConfig& cfg, LayerRow& row);

// One row per layer; up to `workers` layers train concurrently.
LayerSweepReport layerwise_sweep(const Corpus& corpus, const Split& split,
                                 const LayerwiseConfig& cfg);

}  // namespace vibsplit
