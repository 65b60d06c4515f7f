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

#include "vibsplit/layerwise.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "vibsplit/error.hpp"

namespace vibsplit {

std::uint64_t layer_seed(std::uint64_t base, std::optional<int> layer) {
  return layer ? derive_seed(base, static_cast<std::uint64_t>(*layer)) : base;
}

namespace {

std::vector<int> labels_for(const Corpus& corpus, Task task) {
  std::vector<int> out;
  for (const auto& r : corpus.records) out.push_back(r.labels.get(task).value_or(-1));
  return out;
}

}  // namespace

void probe_layer(const Corpus& corpus, const Split& split, int layer, const Stage1Model& stage1,
                 const Stage2Model& stage2, const LayerwiseConfig& cfg, LayerRow& row) {
  ProbeConfig probe = cfg.probe;
  probe.seed = layer_seed(cfg.seed, layer);
  const std::vector<int> labels = labels_for(corpus, cfg.probe_task);
  const int classes = class_count(corpus, cfg.probe_task);
  RepresentationSet raw;
  raw.reserve(corpus.size());
  for (const auto& r : corpus.records)
    raw.push_back({select_layer(load_hidden_states(r), layer)});
  row.probe_raw = probe_utterance(raw, labels, classes, split.train, split.test, probe).value;
  row.probe_textual = probe_utterance(textual_representations(stage1, corpus), labels, classes,
                                      split.train, split.test, probe)
                          .value;
  row.probe_acoustic = probe_utterance(acoustic_representations(stage2, corpus), labels, classes,
                                       split.train, split.test, probe)
                           .value;
}

LayerRow run_layer(const Corpus& corpus, const Split& split, int layer, const LayerwiseConfig& cfg,
                   std::shared_ptr<const Stage1Model>* stage1_out, Stage2Model* stage2_out) {
  LayerRow row;
  row.layer = layer;
  Stage1Config c1 = cfg.stage1;
  c1.fixed_layer = layer;
  c1.seed = layer_seed(cfg.seed, layer);
  auto stage1 = std::make_shared<const Stage1Model>(train_stage1(corpus, split.train, c1));
  row.stage1 = eval_stage1(*stage1, corpus, split.test);

  Stage2Config c2 = cfg.stage2;
  c2.fixed_layer = layer;
  c2.seed = layer_seed(cfg.seed, layer);
  Stage2Model stage2 = train_stage2(corpus, split.train, stage1, c2);
  row.stage2 = eval_stage2(stage2, corpus, split.test);
  probe_layer(corpus, split, layer, *stage1, stage2, cfg, row);
  if (stage1_out) *stage1_out = stage1;
  if (stage2_out) *stage2_out = std::move(stage2);
  return row;
}

LayerSweepReport layerwise_sweep(const Corpus& corpus, const Split& split,
                                 const LayerwiseConfig& cfg) {
  const int layers = static_cast<int>(corpus.layer_count());
  if (layers < 2) throw InvalidInput("layerwise_sweep: need at least two layers");
  LayerSweepReport report;
  report.rows.resize(static_cast<std::size_t>(layers));
  report.stage2_task = task_name(cfg.stage2.task);
  report.probe_task = task_name(cfg.probe_task);
  report.stage2_chance = 1.0 / class_count(corpus, cfg.stage2.task);
  report.probe_chance = 1.0 / class_count(corpus, cfg.probe_task);

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto worker = [&] {
    for (int l = next++; l < layers; l = next++) {
      try {
        report.rows[static_cast<std::size_t>(l)] = run_layer(corpus, split, l, cfg);
      } catch (...) {
        std::lock_guard<std::mutex> guard(failure_lock);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(cfg.workers, 1, layers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return report;
}

std::string LayerSweepReport::stage1_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "layer,wer,cer,kl_per_frame,wer_chance\n";
  for (const auto& r : rows)
    out << r.layer << ',' << r.stage1.wer << ',' << r.stage1.cer << ',' << r.stage1.kl_per_frame
        << ',' << wer_chance << '\n';
  return out.str();
}

std::string LayerSweepReport::stage2_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "layer,task,accuracy,kl_per_frame,chance\n";
  for (const auto& r : rows)
    out << r.layer << ',' << stage2_task << ',' << r.stage2.accuracy << ','
        << r.stage2.kl_per_frame << ',' << stage2_chance << '\n';
  return out.str();
}

std::string LayerSweepReport::probe_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "layer,task,textual,acoustic,raw,chance\n";
  for (const auto& r : rows)
    out << r.layer << ',' << probe_task << ',' << r.probe_textual << ',' << r.probe_acoustic << ','
        << r.probe_raw << ',' << probe_chance << '\n';
  return out.str();
}

int LayerSweepReport::best_stage1_layer() const {
  int best = -1;
  double wer = 0.0;
  for (const auto& r : rows)
    if (best < 0 || r.stage1.wer < wer) {
      best = r.layer;
      wer = r.stage1.wer;
    }
  return best;
}

}  // namespace vibsplit
