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

#include "vibsplit/probing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "vibsplit/error.hpp"

namespace vibsplit {

RepresentationSet raw_representations(const Corpus& corpus) {
  RepresentationSet out;
  out.reserve(corpus.size());
  for (const auto& r : corpus.records) out.push_back(to_layer_stack(load_hidden_states(r)));
  return out;
}

RepresentationSet textual_representations(const Stage1Model& model, const Corpus& corpus) {
  RepresentationSet out;
  out.reserve(corpus.size());
  for (const auto& r : corpus.records)
    out.push_back({textual_latent(model, to_layer_stack(load_hidden_states(r)))});
  return out;
}

RepresentationSet acoustic_representations(const Stage2Model& model, const Corpus& corpus) {
  RepresentationSet out;
  out.reserve(corpus.size());
  for (const auto& r : corpus.records)
    out.push_back({acoustic_latent(model, to_layer_stack(load_hidden_states(r)))});
  return out;
}

namespace {

Matrix probe_input(const Param& layer_logits, const LayerStack& layers) {
  if (layers.size() == 1) return layers.front();
  return layer_mix(layers, layer_logits.value.col(0));
}

void probe_mix_backward(Param& layer_logits, const LayerStack& layers, const Matrix& dx) {
  if (layers.size() < 2) return;
  const Vector w = layer_weights(layer_logits.value.col(0));
  layer_logits.grad.col(0) += layer_mix_backward(layers, w, dx);
}

void check_reps(const RepresentationSet& reps, std::span<const std::size_t> train,
                std::span<const std::size_t> test) {
  if (reps.empty() || train.empty()) throw InvalidInput("probe: empty training set");
  for (std::size_t i : train)
    if (i >= reps.size()) throw InvalidInput("probe: training index out of range");
  for (std::size_t i : test)
    if (i >= reps.size()) throw InvalidInput("probe: test index out of range");
}

}  // namespace

Matrix TranscriptionProbe::input(const LayerStack& layers) const {
  return probe_input(layer_logits, layers);
}

ProbeResult probe_transcription(const RepresentationSet& reps,
                                std::span<const std::string> transcripts, const Vocabulary& vocab,
                                std::span<const std::size_t> train,
                                std::span<const std::size_t> test, const ProbeConfig& cfg,
                                TranscriptionProbe* trained) {
  check_reps(reps, train, test);
  const auto width = reps[train.front()].front().cols();
  Rng rng(derive_seed(cfg.seed, 21));
  TranscriptionProbe probe;
  probe.layer_logits =
      Param("probe.layer_logits", Matrix::Zero(static_cast<Eigen::Index>(reps[train.front()].size()), 1), false);
  probe.head = Affine("probe.head", width, vocab.size(), 1.0 / std::sqrt(static_cast<double>(width)), rng);
  probe.head.bias.value(vocab.blank_index(), 0) = cfg.blank_bias;

  std::vector<std::size_t> items;
  std::vector<LabelSequence> targets(reps.size());
  for (std::size_t i : train) {
    targets[i] = vocab.encode(transcripts[i]);
    if (reps[i].front().rows() < ctc_required_frames(targets[i])) continue;
    items.push_back(i);
  }
  if (items.empty()) throw InvalidInput("probe: no feasible transcription targets");

  ParamRefs params;
  if (reps[train.front()].size() > 1) params.push_back(&probe.layer_logits);
  probe.head.collect(params);
  const long total = static_cast<long>(cfg.epochs) * static_cast<long>(items.size());
  AdamW opt(params, cfg.optim, total);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(items, rng);
    for (std::size_t i : items) {
      const Matrix x = probe.input(reps[i]);
      const Matrix logits = probe.head.forward(x);
      const Matrix logprobs = log_softmax_rows(logits);
      const CtcResult ctc = ctc_loss_and_grad(logprobs, targets[i], vocab.blank_index());
      if (!std::isfinite(ctc.loss)) throw DivergenceError("probe: non-finite CTC loss");
      const Matrix probs = logprobs.array().exp();
      const Vector row_sums = ctc.grad.rowwise().sum();
      const Matrix d_logits = ctc.grad - (probs.array().colwise() * row_sums.array()).matrix();
      const Matrix dx = probe.head.backward(x, d_logits);
      probe_mix_backward(probe.layer_logits, reps[i], dx);
      opt.step();
    }
  }

  ErrorCounts counts;
  for (std::size_t i : test) {
    const Matrix logprobs = log_softmax_rows(probe.head.forward(probe.input(reps[i])));
    counts.add(transcripts[i], greedy_decode(logprobs, vocab));
  }
  ProbeResult r;
  r.task = "transcription";
  r.metric = "wer";
  r.value = test.empty() ? 1.0 : counts.wer();
  r.chance = 1.0;
  r.train_size = items.size();
  r.test_size = test.size();
  r.seed = cfg.seed;
  if (trained) *trained = std::move(probe);
  return r;
}

Matrix UtteranceProbe::input(const LayerStack& layers) const {
  return probe_input(layer_logits, layers);
}

Prediction UtteranceProbe::predict(const LayerStack& layers) const {
  const PoolResult pool = attention_pool(input(layers), pooler);
  return {softmax_row(classifier.forward_row(pool.pooled)).transpose(), pool.weights};
}

ProbeResult probe_utterance(const RepresentationSet& reps, std::span<const int> labels, int classes,
                            std::span<const std::size_t> train, std::span<const std::size_t> test,
                            const ProbeConfig& cfg, UtteranceProbe* trained) {
  check_reps(reps, train, test);
  if (labels.size() != reps.size()) throw InvalidInput("probe: label count does not match records");
  std::vector<std::size_t> items;
  std::set<int> seen;
  for (std::size_t i : train) {
    if (labels[i] < 0) continue;
    if (labels[i] >= classes) throw InvalidInput("probe: label out of range");
    items.push_back(i);
    seen.insert(labels[i]);
  }
  if (seen.size() < 2)
    throw InvalidInput("probe: fewer than two classes present in the training set");

  const auto width = reps[items.front()].front().cols();
  Rng rng(derive_seed(cfg.seed, 22));
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));
  UtteranceProbe probe;
  probe.layer_logits =
      Param("probe.layer_logits", Matrix::Zero(static_cast<Eigen::Index>(reps[items.front()].size()), 1), false);
  probe.pooler = AttentionPooler("probe.pooler", width, scale, rng);
  probe.classifier = Affine("probe.classifier", width, classes, scale, rng);

  ParamRefs params;
  if (reps[items.front()].size() > 1) params.push_back(&probe.layer_logits);
  probe.pooler.collect(params);
  probe.classifier.collect(params);
  const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  const long per_epoch = static_cast<long>((items.size() + batch - 1) / batch);
  AdamW opt(params, cfg.optim, static_cast<long>(cfg.epochs) * per_epoch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(items, rng);
    for (std::size_t start = 0; start < items.size(); start += batch) {
      const std::size_t end = std::min(items.size(), start + batch);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = items[k];
        const Matrix x = probe.input(reps[i]);
        const PoolResult pool = attention_pool(x, probe.pooler);
        RowVector d_logits = softmax_row(probe.classifier.forward_row(pool.pooled));
        d_logits(labels[i]) -= 1.0;
        const RowVector d_pooled = probe.classifier.backward_row(pool.pooled, d_logits);
        const Matrix dx = attention_pool_backward(x, probe.pooler, pool, d_pooled);
        probe_mix_backward(probe.layer_logits, reps[i], dx);
      }
      scale_grads(params, 1.0 / static_cast<double>(end - start));
      opt.step();
    }
  }

  std::size_t correct = 0, evaluated = 0;
  for (std::size_t i : test) {
    if (labels[i] < 0) continue;
    const Prediction p = probe.predict(reps[i]);
    Eigen::Index best = 0;
    p.probabilities.maxCoeff(&best);
    if (best == labels[i]) ++correct;
    ++evaluated;
  }
  ProbeResult r;
  r.metric = "accuracy";
  r.value = evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated) : 0.0;
  r.chance = 1.0 / static_cast<double>(classes);
  r.train_size = items.size();
  r.test_size = evaluated;
  r.seed = cfg.seed;
  if (trained) *trained = std::move(probe);
  return r;
}

std::vector<int> quantile_bucketize(std::span<const double> values, int k) {
  if (k < 1) throw InvalidInput("quantile_bucketize: k must be positive");
  const std::size_t n = values.size();
  if (static_cast<std::size_t>(k) > n)
    throw InvalidInput("quantile_bucketize: k=" + std::to_string(k) + " exceeds " +
                       std::to_string(n) + " values");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> out(n);
  std::size_t group_start = 0;
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (rank > 0 && values[order[rank]] != values[order[rank - 1]]) group_start = rank;
    out[order[rank]] = static_cast<int>(group_start * static_cast<std::size_t>(k) / n);
  }
  return out;
}

const ProbeResult* ProbeReport::find(std::string_view source, std::string_view task) const {
  for (const auto& e : entries)
    if (e.source == source && e.task == task) return &e;
  return nullptr;
}

std::string ProbeReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    rows.push_back({{"source", e.source},
                    {"task", e.task},
                    {"metric", e.metric},
                    {"value", e.value},
                    {"chance", e.chance},
                    {"train_size", e.train_size},
                    {"test_size", e.test_size},
                    {"seed", e.seed},
                    {"present", e.present}});
  }
  return nlohmann::json{{"probes", rows}}.dump(2);
}

ProbeReport ProbeReport::from_json(const std::string& text) {
  ProbeReport report;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& row : j.at("probes")) {
      ProbeResult e;
      e.source = row.at("source").get<std::string>();
      e.task = row.at("task").get<std::string>();
      e.metric = row.at("metric").get<std::string>();
      e.value = row.at("value").get<double>();
      e.chance = row.at("chance").get<double>();
      e.train_size = row.at("train_size").get<std::size_t>();
      e.test_size = row.at("test_size").get<std::size_t>();
      e.seed = row.at("seed").get<std::uint64_t>();
      e.present = row.at("present").get<bool>();
      report.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("probe report: ") + ex.what());
  }
  return report;
}

std::string ProbeReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "source,task,metric,value,chance,train_size,test_size,present\n";
  for (const auto& e : entries) {
    out << e.source << ',' << e.task << ',' << e.metric << ',';
    if (e.present)
      out << e.value;
    out << ',' << e.chance << ',' << e.train_size << ',' << e.test_size << ','
        << (e.present ? 1 : 0) << '\n';
  }
  return out.str();
}

void ProbeReport::write(const std::filesystem::path& json_path,
                        const std::filesystem::path& csv_path) const {
  std::ofstream(json_path) << to_json() << '\n';
  std::ofstream(csv_path) << to_csv();
}

std::optional<std::vector<int>> series_buckets(const Corpus& corpus, bool pitch, int k) {
  std::vector<double> means;
  means.reserve(corpus.size());
  for (const auto& r : corpus.records) {
    const auto& series = pitch ? r.pitch : r.intensity;
    if (!series || series->empty()) return std::nullopt;
    double sum = 0.0;
    std::size_t count = 0;
    for (double v : *series) {
      if (pitch && v <= 0.0) continue;
      sum += v;
      ++count;
    }
    means.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }
  if (means.size() < static_cast<std::size_t>(k)) return std::nullopt;
  return quantile_bucketize(means, k);
}

namespace {

std::vector<int> task_labels(const Corpus& corpus, Task task) {
  std::vector<int> out;
  out.reserve(corpus.size());
  for (const auto& r : corpus.records) out.push_back(r.labels.get(task).value_or(-1));
  return out;
}

}  // namespace

ProbeReport run_sanity_suite(const Stage1Model& stage1,
                             const std::vector<const Stage2Model*>& stage2, const Corpus& corpus,
                             const Split& split, const ProbeConfig& cfg) {
  std::vector<std::pair<std::string, RepresentationSet>> sources;
  sources.emplace_back("raw", raw_representations(corpus));
  sources.emplace_back("textual", textual_representations(stage1, corpus));
  for (const Stage2Model* m : stage2)
    sources.emplace_back(std::string("acoustic_") + task_name(m->config.task),
                         acoustic_representations(*m, corpus));

  std::vector<std::string> transcripts;
  for (const auto& r : corpus.records) transcripts.push_back(r.transcript);
  const auto intensity = series_buckets(corpus, false);
  const auto pitch = series_buckets(corpus, true);
  if (!intensity) spdlog::warn("probe: intensity series missing; intensity probes skipped");
  if (!pitch) spdlog::warn("probe: pitch series missing; pitch probes skipped");
  const std::vector<int> gender = task_labels(corpus, Task::Gender);
  const std::vector<int> speaker = task_labels(corpus, Task::Speaker);

  ProbeReport report;
  for (const auto& [name, reps] : sources) {
    ProbeResult t = probe_transcription(reps, transcripts, corpus.vocab, split.train, split.test, cfg);
    t.source = name;
    report.entries.push_back(t);

    auto add = [&](const std::string& task, const std::optional<std::vector<int>>& labels,
                   int classes) {
      ProbeResult r;
      if (labels && classes >= 2) {
        r = probe_utterance(reps, *labels, classes, split.train, split.test, cfg);
      } else {
        r.metric = "accuracy";
        r.chance = classes > 0 ? 1.0 / classes : 0.0;
        r.seed = cfg.seed;
        r.present = false;
      }
      r.source = name;
      r.task = task;
      report.entries.push_back(r);
    };
    add("intensity", intensity, 4);
    add("pitch", pitch, 4);
    add("gender", gender, class_count(corpus, Task::Gender));
    add("speaker", speaker, class_count(corpus, Task::Speaker));
  }
  return report;
}

}  // namespace vibsplit
