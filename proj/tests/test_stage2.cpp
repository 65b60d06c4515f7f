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

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vibsplit/error.hpp"
#include "vibsplit/probing.hpp"

using namespace vibsplit;

namespace {

Stage2Config quick_stage2(Task task, int epochs = 5) {
  Stage2Config c;
  c.task = task;
  c.epochs = epochs;
  c.seed = 5;
  return c;
}

const Stage2Model& small_speaker_model() {
  static const Stage2Model m = train_stage2(fixture::small_corpus().corpus, fixture::small_split().train,
                                            fixture::small_stage1(), quick_stage2(Task::Speaker, 10));
  return m;
}

}  // namespace

TEST_CASE("stage2 step gradients match finite differences") {
  const Corpus& c = fixture::small_corpus().corpus;
  Stage2Config cfg = quick_stage2(Task::Emotion);
  cfg.d = 4;
  cfg.allowed_d = {4};
  Stage2Model m = init_stage2(fixture::small_stage1(), c.layer_count(), c.width(), 4, cfg);
  Rng rng(51);
  m.layer_logits.value = gaussian_matrix(m.layer_count(), 1, 0.5, rng);
  const auto& rec = c.records.front();
  const LayerStack layers = to_layer_stack(*rec.hidden);
  const RowVector textual = pooled_textual(*m.stage1, layers);
  const Matrix eps = gaussian_matrix(rec.hidden->frame_count(), 4, 1.0, rng);
  const int label = *rec.labels.emotion;

  ParamRefs params = m.trainable();
  zero_grads(params);
  stage2_forward_backward(m, layers, textual, label, eps, 0.4);
  std::vector<Matrix> analytic;
  for (Param* p : params) analytic.push_back(p->grad);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i];
    const Matrix numeric = oracle::numeric_gradient(
        [&](const Matrix& v) {
          const Matrix keep = p->value;
          p->value = v;
          const double out = stage2_forward_backward(m, layers, textual, label, eps, 0.4).loss;
          p->value = keep;
          return out;
        },
        p->value);
    CHECK_MESSAGE(oracle::gradients_match(analytic[i], numeric, 1e-4), p->name);
  }
}

TEST_CASE("pooled textual latent is the frame mean of stage1 means") {
  const auto& rec = fixture::small_corpus().corpus.records.front();
  const LayerStack layers = to_layer_stack(*rec.hidden);
  const Matrix z = textual_latent(*fixture::small_stage1(), layers);
  CHECK((pooled_textual(*fixture::small_stage1(), layers) - z.colwise().mean()).norm() < 1e-12);
}

TEST_CASE("stage2 leaves stage1 bitwise unchanged") {
  const auto s1 = fixture::small_stage1();
  const auto before = checksum(s1->parameters());
  const Stage2Model& m = small_speaker_model();
  CHECK(checksum(s1->parameters()) == before);
  CHECK(m.stage1_checksum == before);
}

TEST_CASE("stage2 speaker classification on the small corpus") {
  const auto& s = fixture::small_corpus();
  const auto metrics = eval_stage2(small_speaker_model(), s.corpus, fixture::small_split().test);
  CHECK(metrics.accuracy >= 0.9);
  CHECK(std::isfinite(metrics.kl_per_frame));
}

TEST_CASE("predictions are distributions and deterministic") {
  const auto& s = fixture::small_corpus();
  const Stage2Model& m = small_speaker_model();
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& h = *s.corpus.records[i].hidden;
    const Prediction p = predict(m, h);
    CHECK(std::abs(p.probabilities.sum() - 1.0) < 1e-6);
    CHECK(std::abs(p.attention.sum() - 1.0) < 1e-6);
    CHECK((p.attention.array() >= 0).all());
    CHECK(p.attention.size() == h.frame_count());
    const Prediction q = predict(m, h);
    CHECK(p.probabilities == q.probabilities);
    CHECK(p.attention == q.attention);
  }
}

TEST_CASE("untrained classifier is near chance") {
  const auto& s = fixture::small_corpus();
  const Stage2Model m = init_stage2(fixture::small_stage1(), s.corpus.layer_count(), s.corpus.width(), 4,
                                    quick_stage2(Task::Emotion));
  Vector mean = Vector::Zero(4);
  for (const auto& r : s.corpus.records) mean += predict(m, *r.hidden).probabilities;
  mean /= static_cast<double>(s.corpus.records.size());
  CHECK((mean.array() - 0.25).abs().maxCoeff() < 0.1);
}

TEST_CASE("records without the task label are skipped") {
  Corpus c = fixture::small_corpus().corpus;
  std::vector<std::size_t> train(fixture::small_split().train.begin(), fixture::small_split().train.begin() + 40);
  for (std::size_t i = 0; i < 10; ++i) c.records[train[i]].labels.speaker.reset();
  Stage2Log log;
  train_stage2(c, train, fixture::small_stage1(), quick_stage2(Task::Speaker, 1), &log);
  CHECK(log.skipped == 10);
}

TEST_CASE("balanced subset equalizes class counts") {
  std::vector<std::size_t> items;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 100; ++i) {
    items.push_back(i);
    labels.push_back(i < 70 ? 0 : (i < 90 ? 1 : 2));
  }
  Rng rng(52);
  const auto subset = balanced_subset(items, labels, rng);
  CHECK(subset.size() == 30);
  std::array<int, 3> counts{};
  for (std::size_t i : subset) ++counts[static_cast<std::size_t>(labels[i])];
  CHECK(counts == std::array<int, 3>{10, 10, 10});
}

TEST_CASE("stage2 rejects a stage1 from another representation family") {
  auto other = std::make_shared<Stage1Model>(*fixture::small_stage1());
  other->corpus.width += 1;
  CHECK_THROWS_AS(train_stage2(fixture::small_corpus().corpus, fixture::small_split().train, other,
                               quick_stage2(Task::Speaker, 1)),
                  ConfigError);
}

TEST_CASE("dropping textual conditioning does not reduce text leakage") {
  const auto& s = fixture::small_corpus();
  const auto& split = fixture::small_split();
  Stage2Config ablated = quick_stage2(Task::Speaker, 10);
  ablated.use_textual_conditioning = false;
  const Stage2Model without = train_stage2(s.corpus, split.train, fixture::small_stage1(), ablated);
  ProbeConfig pc;
  pc.epochs = 10;
  const auto transcripts = fixture::transcripts(s.corpus);
  const double wer_with = probe_transcription(acoustic_representations(small_speaker_model(), s.corpus),
                                              transcripts, s.corpus.vocab, split.train, split.test, pc)
                              .value;
  const double wer_without = probe_transcription(acoustic_representations(without, s.corpus), transcripts,
                                                 s.corpus.vocab, split.train, split.test, pc)
                                 .value;
  MESSAGE("symbol-probe WER with conditioning " << wer_with << ", without " << wer_without);
  CHECK(wer_without <= wer_with);
}
