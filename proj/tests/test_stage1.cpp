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

#include <limits>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vibsplit/error.hpp"

using namespace vibsplit;

TEST_CASE("stage1 step gradients match finite differences") {
  const Corpus& c = fixture::small_corpus().corpus;
  Stage1Config cfg = fixture::quick_stage1();
  cfg.d = 4;
  cfg.allowed_d = {4};
  Stage1Model m = init_stage1(c.layer_count(), c.width(), c.vocab, cfg);
  Rng rng(41);
  m.layer_logits.value = gaussian_matrix(m.layer_count(), 1, 0.5, rng);
  const auto& rec = c.records.front();
  const LayerStack layers = to_layer_stack(*rec.hidden);
  const auto target = c.vocab.encode(rec.transcript);
  const Matrix eps = gaussian_matrix(rec.hidden->frame_count(), 4, 1.0, rng);
  const double beta = 0.7;

  ParamRefs params = m.trainable();
  zero_grads(params);
  const StepResult step = stage1_forward_backward(m, layers, target, eps, beta);
  CHECK(step.loss == doctest::Approx(step.task_loss + beta * step.kl).epsilon(1e-12));
  std::vector<Matrix> analytic;
  for (Param* p : params) analytic.push_back(p->grad);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i];
    const Matrix numeric = oracle::numeric_gradient(
        [&](const Matrix& v) {
          const Matrix keep = p->value;
          p->value = v;
          const double out = stage1_forward_backward(m, layers, target, eps, beta).loss;
          p->value = keep;
          return out;
        },
        p->value);
    CHECK_MESSAGE(oracle::gradients_match(analytic[i], numeric, 1e-4), p->name);
  }
}

TEST_CASE("untrained model decodes at chance") {
  const auto& s = fixture::small_corpus();
  const Stage1Model m =
      init_stage1(s.corpus.layer_count(), s.corpus.width(), s.corpus.vocab, fixture::quick_stage1());
  const auto metrics = eval_stage1(m, s.corpus, fixture::small_split().test);
  CHECK(std::abs(metrics.wer - 1.0) <= 0.05);
}

TEST_CASE("trained stage1 transcribes the small corpus") {
  const auto& s = fixture::small_corpus();
  const auto m = fixture::small_stage1();
  const auto a = eval_stage1(*m, s.corpus, fixture::small_split().test);
  const auto b = eval_stage1(*m, s.corpus, fixture::small_split().test);
  CHECK(a.wer <= 0.15);
  CHECK(a.wer == b.wer);
  CHECK(a.kl_per_frame == b.kl_per_frame);
  CHECK(std::isfinite(a.kl_per_frame));
  const auto& rec = s.corpus.records[fixture::small_split().test.front()];
  CHECK(textual_latent(*m, *rec.hidden).cols() == 16);
  CHECK(textual_latent(*m, *rec.hidden).rows() == rec.hidden->frame_count());
}

TEST_CASE("one-hot features are separable within five epochs") {
  SynthConfig sc = fixture::small_config();
  sc.one_hot = true;
  const Corpus c = synth_generate(sc).corpus;
  const Split split = split_by_id(c);
  Stage1Config cfg = fixture::quick_stage1(5);
  cfg.d = c.vocab.size() + 1;
  cfg.allowed_d = {cfg.d};
  // Unit-amplitude one-hot inputs need a larger step than the mixed features.
  cfg.optim.lr = 1e-2;
  const Stage1Model m = train_stage1(c, split.train, cfg);
  CHECK(eval_stage1(m, c, split.test).wer <= 0.02);
}

TEST_CASE("huge beta closes the bottleneck") {
  const auto& s = fixture::small_corpus();
  Stage1Config cfg = fixture::quick_stage1(5);
  cfg.beta_constant = 1e3;
  const Stage1Model m = train_stage1(s.corpus, fixture::small_split().train, cfg);
  const auto metrics = eval_stage1(m, s.corpus, fixture::small_split().test);
  CHECK(metrics.kl_per_frame < 0.05);
  CHECK(metrics.wer >= 0.9);
}

TEST_CASE("training loss falls and layer weights stay normalized") {
  const auto& s = fixture::small_corpus();
  auto smoothed = [](const std::vector<double>& v, std::size_t e) {
    return (v[e] + v[e + 1] + v[e + 2]) / 3.0;
  };
  Stage1Config fixed = fixture::quick_stage1(10);
  fixed.beta_constant = 0.1;
  TrainLog flat;
  train_stage1(s.corpus, fixture::small_split().train, fixed, &flat);
  REQUIRE(flat.epoch_loss.size() == 10);
  for (std::size_t e = 1; e + 2 < 10; ++e)
    CHECK(smoothed(flat.epoch_loss, e) < smoothed(flat.epoch_loss, e - 1));

  // Under annealing the weighted total rises with beta once CTC has converged.
  TrainLog log;
  train_stage1(s.corpus, fixture::small_split().train, fixture::quick_stage1(10), &log);
  CHECK(log.epoch_loss.back() < 0.5 * log.epoch_loss.front());
  for (const Vector& w : log.layer_weights) {
    CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    CHECK((w.array() >= 0).all());
  }
  CHECK(log.skipped == 0);
}

TEST_CASE("information loss compresses without hurting transcription much") {
  const auto& s = fixture::small_corpus();
  const auto& split = fixture::small_split();
  Stage1Config base = fixture::quick_stage1(10);
  base.beta_constant = 0.0;
  const auto free = eval_stage1(train_stage1(s.corpus, split.train, base), s.corpus, split.test);
  const auto annealed =
      eval_stage1(train_stage1(s.corpus, split.train, fixture::quick_stage1(10)), s.corpus, split.test);
  CHECK(free.wer <= annealed.wer + 0.05);
  CHECK(annealed.kl_per_frame < free.kl_per_frame);
}

TEST_CASE("stage1 training is deterministic given the seed") {
  const auto& s = fixture::small_corpus();
  const auto a = train_stage1(s.corpus, fixture::small_split().train, fixture::quick_stage1(1));
  const auto b = train_stage1(s.corpus, fixture::small_split().train, fixture::quick_stage1(1));
  CHECK(checksum(a.parameters()) == checksum(b.parameters()));
}

TEST_CASE("fixed-layer mode uses a one-hot layer weight") {
  const auto& s = fixture::small_corpus();
  Stage1Config cfg = fixture::quick_stage1();
  cfg.fixed_layer = 2;
  const Stage1Model m = init_stage1(s.corpus.layer_count(), s.corpus.width(), s.corpus.vocab, cfg);
  const Vector w = m.layer_weight_values();
  CHECK(w(2) == 1.0);
  CHECK(w.sum() == 1.0);
}

TEST_CASE("stage1 config and divergence errors") {
  const auto& s = fixture::small_corpus();
  Stage1Config cfg = fixture::quick_stage1(1);
  cfg.d = 17;
  CHECK_THROWS_AS(train_stage1(s.corpus, fixture::small_split().train, cfg), ConfigError);

  Corpus broken = s.corpus;
  broken.records.resize(20);
  auto poisoned = std::make_shared<HiddenStateTensor>(*broken.records[0].hidden);
  for (float& v : poisoned->values()) v = std::numeric_limits<float>::quiet_NaN();
  broken.records[0].hidden = poisoned;
  std::vector<std::size_t> all(20);
  for (std::size_t i = 0; i < 20; ++i) all[i] = i;
  CHECK_THROWS_AS(train_stage1(broken, all, fixture::quick_stage1(1)), DivergenceError);
}
