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

#include "vibsplit/commands.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "vibsplit/checkpoint.hpp"
#include "vibsplit/error.hpp"

namespace vibsplit {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path checkpoints_dir(const RunConfig& cfg) { return cfg.out / "checkpoints"; }
fs::path reports_dir(const RunConfig& cfg) { return cfg.out / "reports"; }
fs::path tables_dir(const RunConfig& cfg) { return cfg.out / "tables"; }

fs::path default_stage1_path(const RunConfig& cfg, std::optional<int> layer) {
  return checkpoints_dir(cfg) / (layer ? "stage1_layer" + std::to_string(*layer) : "stage1");
}

fs::path default_stage2_path(const RunConfig& cfg, Task task, std::optional<int> layer) {
  std::string name = std::string("stage2_") + task_name(task);
  if (layer) name += "_layer" + std::to_string(*layer);
  return checkpoints_dir(cfg) / name;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void snapshot(const RunConfig& cfg, const std::string& command) {
  write_text(cfg.out / ("resolved_config_" + command + ".toml"), cfg.to_toml());
}

std::string weights_csv(const Vector& w) {
  std::ostringstream out;
  out.precision(17);
  out << "layer,weight\n";
  for (Eigen::Index l = 0; l < w.size(); ++l) out << l << ',' << w(l) << '\n';
  return out.str();
}

json stage1_metrics_json(const Stage1Metrics& m) {
  return {{"wer", m.wer}, {"cer", m.cer}, {"kl_per_frame", m.kl_per_frame},
          {"test_utterances", m.utterances}, {"wer_chance", 1.0}};
}

json stage2_metrics_json(const Stage2Metrics& m, int classes) {
  return {{"accuracy", m.accuracy}, {"kl_per_frame", m.kl_per_frame},
          {"test_utterances", m.utterances}, {"chance", 1.0 / classes}};
}

std::vector<int> labels_for(const Corpus& corpus, Task task) {
  std::vector<int> out;
  for (const auto& r : corpus.records) out.push_back(r.labels.get(task).value_or(-1));
  return out;
}

// Runs fn(l) for every layer with up to `workers` threads; rethrows the first
// failure.
template <typename Fn>
void for_each_layer(int layers, int workers, Fn fn) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex lock;
  auto work = [&] {
    for (int l = next++; l < layers; l = next++) {
      try {
        fn(l);
      } catch (...) {
        std::lock_guard<std::mutex> guard(lock);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::clamp(workers, 1, std::max(layers, 1));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

void train_stage1_run(const RunConfig& cfg, const RunCorpus& rc) {
  const Corpus& corpus = rc.corpus;
  if (cfg.sweep) {
    const int layers = static_cast<int>(corpus.layer_count());
    if (layers < 2) throw ConfigError("sweep mode needs at least two layers");
    LayerSweepReport report;
    report.rows.resize(static_cast<std::size_t>(layers));
    for_each_layer(layers, cfg.workers, [&](int l) {
      RunConfig c = cfg;
      c.layer = l;
      const Stage1Model m = train_stage1(corpus, rc.split.train, c.stage1_config());
      save_stage1(m, default_stage1_path(cfg, l));
      report.rows[static_cast<std::size_t>(l)].layer = l;
      report.rows[static_cast<std::size_t>(l)].stage1 = eval_stage1(m, corpus, rc.split.test);
    });
    write_text(tables_dir(cfg) / "layerwise_stage1.csv", report.stage1_csv());
    return;
  }
  TrainLog log;
  const Stage1Model m = train_stage1(corpus, rc.split.train, cfg.stage1_config(), &log);
  const Stage1Metrics metrics = eval_stage1(m, corpus, rc.split.test);
  save_stage1(m, default_stage1_path(cfg, cfg.layer));
  json j = stage1_metrics_json(metrics);
  j["train_utterances"] = rc.split.train.size();
  j["skipped"] = log.skipped;
  j["epoch_loss"] = log.epoch_loss;
  j["epoch_kl"] = log.epoch_kl;
  const std::string suffix = cfg.layer ? "_layer" + std::to_string(*cfg.layer) : "";
  write_json(reports_dir(cfg) / ("stage1" + suffix + "_metrics.json"), j);
  if (!cfg.layer)
    write_text(tables_dir(cfg) / "stage1_layer_weights.csv", weights_csv(m.layer_weight_values()));
  spdlog::info("stage 1: WER {:.4f} CER {:.4f} KL/frame {:.4f}", metrics.wer, metrics.cer,
               metrics.kl_per_frame);
}

void train_stage2_run(const RunConfig& cfg, const RunCorpus& rc, const fs::path& stage1_path) {
  const Corpus& corpus = rc.corpus;
  const Task task = cfg.stage2.task;
  const int classes = class_count(corpus, task);
  if (cfg.sweep) {
    const int layers = static_cast<int>(corpus.layer_count());
    if (layers < 2) throw ConfigError("sweep mode needs at least two layers");
    LayerSweepReport report;
    report.rows.resize(static_cast<std::size_t>(layers));
    report.stage2_task = task_name(task);
    report.stage2_chance = 1.0 / classes;
    for_each_layer(layers, cfg.workers, [&](int l) {
      RunConfig c = cfg;
      c.layer = l;
      auto s1 = std::make_shared<const Stage1Model>(
          load_stage1(stage1_path / ("stage1_layer" + std::to_string(l))));
      const Stage2Model m = train_stage2(corpus, rc.split.train, s1, c.stage2_config());
      save_stage2(m, default_stage2_path(cfg, task, l));
      report.rows[static_cast<std::size_t>(l)].layer = l;
      report.rows[static_cast<std::size_t>(l)].stage2 = eval_stage2(m, corpus, rc.split.test);
    });
    write_text(tables_dir(cfg) / "layerwise_stage2.csv", report.stage2_csv());
    return;
  }
  auto s1 = std::make_shared<const Stage1Model>(load_stage1(stage1_path));
  Stage2Log log;
  const Stage2Model m = train_stage2(corpus, rc.split.train, s1, cfg.stage2_config(), &log);
  const Stage2Metrics metrics = eval_stage2(m, corpus, rc.split.test);
  save_stage2(m, default_stage2_path(cfg, task, cfg.layer));
  json j = stage2_metrics_json(metrics, classes);
  j["task"] = task_name(task);
  j["skipped"] = log.skipped;
  j["epoch_loss"] = log.epoch_loss;
  j["epoch_kl"] = log.epoch_kl;
  const std::string suffix = cfg.layer ? "_layer" + std::to_string(*cfg.layer) : "";
  write_json(reports_dir(cfg) / (std::string("stage2_") + task_name(task) + suffix + "_metrics.json"), j);
  if (!cfg.layer)
    write_text(tables_dir(cfg) / (std::string("stage2_") + task_name(task) + "_layer_weights.csv"),
               weights_csv(m.layer_weight_values()));
  spdlog::info("stage 2 ({}): accuracy {:.4f} KL/frame {:.4f}", task_name(task), metrics.accuracy,
               metrics.kl_per_frame);
}

}  // namespace

RunCorpus load_run_corpus(const RunConfig& cfg) {
  RunCorpus rc;
  if (cfg.manifest.empty()) {
    SynthCorpus synth = synth_generate(cfg.synth);
    rc.corpus = std::move(synth.corpus);
    rc.lexicon = std::move(synth.lexicon);
  } else {
    rc.corpus = load_corpus(cfg.manifest, cfg.vocab.empty() ? std::nullopt
                                                            : std::optional<fs::path>(cfg.vocab));
    const fs::path lexicon = cfg.manifest.parent_path() / "lexicon.tsv";
    if (fs::exists(lexicon)) rc.lexicon = PolarityLexicon::load(lexicon);
  }
  if (!cfg.lexicon.empty()) rc.lexicon = PolarityLexicon::load(cfg.lexicon);
  rc.split = split_by_id(rc.corpus);
  return rc;
}

void cmd_synth(const RunConfig& cfg) {
  cfg.synth.validate();
  const SynthCorpus synth = synth_generate(cfg.synth);
  materialize_synth(synth, cfg.out / "corpus");
  snapshot(cfg, "synth");
  spdlog::info("wrote {} utterances to {}", synth.corpus.size(), (cfg.out / "corpus").string());
}

void cmd_train(const RunConfig& cfg, int stage, const std::optional<fs::path>& stage1) {
  if (stage != 1 && stage != 2) throw ConfigError("--stage must be 1 or 2");
  if (stage == 2 && !stage1) throw ConfigError("stage 2 training needs --stage1 <checkpoint>");
  const RunCorpus rc = load_run_corpus(cfg);
  snapshot(cfg, "train_stage" + std::to_string(stage));
  if (stage == 1)
    train_stage1_run(cfg, rc);
  else
    train_stage2_run(cfg, rc, *stage1);
}

void cmd_probe(const RunConfig& cfg, const fs::path& stage1, const std::vector<fs::path>& stage2) {
  const RunCorpus rc = load_run_corpus(cfg);
  snapshot(cfg, "probe");
  const Corpus& corpus = rc.corpus;
  if (cfg.sweep) {
    if (stage2.size() != 1)
      throw ConfigError("sweep probing takes one --stage2 directory of per-layer checkpoints");
    const int layers = static_cast<int>(corpus.layer_count());
    const LayerwiseConfig lc = cfg.layerwise_config();
    LayerSweepReport report;
    report.rows.resize(static_cast<std::size_t>(layers));
    report.probe_task = task_name(cfg.probe_task);
    report.probe_chance = 1.0 / class_count(corpus, cfg.probe_task);
    const std::string task = task_name(cfg.stage2.task);
    for_each_layer(layers, cfg.workers, [&](int l) {
      const std::string suffix = "_layer" + std::to_string(l);
      const Stage1Model s1 = load_stage1(stage1 / ("stage1" + suffix));
      const Stage2Model s2 = load_stage2(stage2.front() / ("stage2_" + task + suffix));
      auto& row = report.rows[static_cast<std::size_t>(l)];
      row.layer = l;
      probe_layer(corpus, rc.split, l, s1, s2, lc, row);
    });
    write_text(tables_dir(cfg) / "layerwise_probe.csv", report.probe_csv());
    return;
  }
  const Stage1Model s1 = load_stage1(stage1);
  std::vector<Stage2Model> models;
  for (const auto& p : stage2) models.push_back(load_stage2(p));
  std::vector<const Stage2Model*> refs;
  for (const auto& m : models) refs.push_back(&m);
  const ProbeReport report = run_sanity_suite(s1, refs, corpus, rc.split, cfg.probe_config());
  fs::create_directories(reports_dir(cfg));
  fs::create_directories(tables_dir(cfg));
  report.write(reports_dir(cfg) / "probe_report.json", tables_dir(cfg) / "probe_grid.csv");
}

void cmd_attribute(const RunConfig& cfg, const fs::path& stage2_path) {
  const RunCorpus rc = load_run_corpus(cfg);
  snapshot(cfg, "attribute");
  const Corpus& corpus = rc.corpus;
  const Stage2Model s2 = load_stage2(stage2_path);
  const Task task = s2.config.task;
  const std::vector<int> labels = labels_for(corpus, task);
  const int classes = class_count(corpus, task);
  const ProbeConfig pc = cfg.probe_config();

  const RepresentationSet textual = textual_representations(*s2.stage1, corpus);
  const TextualAttention ta =
      train_textual_attention(textual, labels, classes, rc.split.train, rc.split.test, pc);
  const RepresentationSet raw = raw_representations(corpus);
  UtteranceProbe ig_classifier;
  const ProbeResult ig_result =
      probe_utterance(raw, labels, classes, rc.split.train, rc.split.test, pc, &ig_classifier);
  if (!rc.lexicon) spdlog::warn("attribute: no polarity lexicon; polarity dimension omitted");

  AttributionInputs inputs;
  inputs.acoustic = &s2;
  inputs.textual = &ta;
  inputs.ig_classifier = &ig_classifier;
  inputs.lexicon = rc.lexicon ? &*rc.lexicon : nullptr;
  inputs.extrema = cfg.extrema;
  inputs.ig_steps = cfg.ig_steps;

  std::vector<std::size_t> records = rc.split.test;
  if (cfg.max_records > 0 && records.size() > static_cast<std::size_t>(cfg.max_records))
    records.resize(static_cast<std::size_t>(cfg.max_records));
  AgreementTable table;
  for (std::size_t i : records) {
    const UtteranceRecord& r = corpus.records[i];
    const AttributionResult result = attribute_record(r, raw[i], inputs);
    write_text(reports_dir(cfg) / "attribution" / (r.id + ".json"), result.to_json() + "\n");
    write_text(tables_dir(cfg) / "attribution" / (r.id + ".csv"), result.to_csv());
    table.add(result);
  }
  write_text(tables_dir(cfg) / "agreement.csv", table.to_csv());
  json summary{{"task", task_name(task)},
               {"records", records.size()},
               {"textual_probe_accuracy", ta.result.value},
               {"ig_classifier_accuracy", ig_result.value},
               {"chance", 1.0 / classes}};
  for (const auto& m : kScoreMethods)
    for (const auto& f : kFeatureNames) {
      const double v = table.mean(m, f);
      summary["agreement"][m][f] = std::isnan(v) ? json(nullptr) : json(v);
    }
  write_json(reports_dir(cfg) / "attribution_summary.json", summary);
}

void cmd_export_latents(const RunConfig& cfg, const fs::path& stage2_path) {
  const RunCorpus rc = load_run_corpus(cfg);
  snapshot(cfg, "export_latents");
  const Stage2Model s2 = load_stage2(stage2_path);
  const int dt = s2.stage1->latent_width();
  const int da = s2.latent_width();
  std::ostringstream out;
  out.precision(17);
  out << "id,emotion,speaker,gender,transcript";
  for (int j = 0; j < dt; ++j) out << ",textual_" << j;
  for (int j = 0; j < da; ++j) out << ",acoustic_" << j;
  out << '\n';
  auto label = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& r : rc.corpus.records) {
    const LayerStack layers = to_layer_stack(load_hidden_states(r));
    const RowVector t = textual_latent(*s2.stage1, layers).colwise().mean();
    const RowVector a = acoustic_latent(s2, layers).colwise().mean();
    out << r.id << ',' << label(r.labels.emotion) << ',' << label(r.labels.speaker) << ','
        << label(r.labels.gender) << ",\"" << r.transcript << '"';
    for (int j = 0; j < dt; ++j) out << ',' << t(j);
    for (int j = 0; j < da; ++j) out << ',' << a(j);
    out << '\n';
  }
  write_text(tables_dir(cfg) / "latents.csv", out.str());
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const InvalidInput*>(&e)) return 3;
  if (dynamic_cast<const DivergenceError*>(&e)) return 4;
  return 1;
}

}  // namespace vibsplit
