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

#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vibsplit/attribution.hpp"
#include "vibsplit/error.hpp"

using namespace vibsplit;

namespace {

int flagged(const std::vector<double>& v) {
  return static_cast<int>(std::count(v.begin(), v.end(), 1.0));
}

}  // namespace

TEST_CASE("extrema: ramp, triangle and prominence filter") {
  std::vector<double> ramp(20);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  CHECK(flagged(detect_extrema(ramp)) == 0);

  const std::vector<double> tri{0, 1, 2, 3, 4, 5, 4, 3, 2, 1, 0};
  const auto t = detect_extrema(tri);
  CHECK(flagged(t) == 1);
  CHECK(t[5] == 1.0);

  // Peaks of height 10 and 0.5 on a flat floor; the small one is below 0.1 * range.
  std::vector<double> two(30, 0.0);
  two[7] = 10.0;
  two[6] = two[8] = 5.0;
  two[21] = 0.5;
  const auto e = detect_extrema(two);
  CHECK(e[7] == 1.0);
  CHECK(e[21] == 0.0);
  CHECK(flagged(e) == 1);

  // Valleys count too.
  std::vector<double> dip(11, 3.0);
  dip[5] = 0.0;
  CHECK(detect_extrema(dip)[5] == 1.0);
}

TEST_CASE("extrema edge cases") {
  CHECK(flagged(detect_extrema(std::vector<double>{1, 3, 1})) == 0);
  ExtremaOptions bad;
  bad.window = 4;
  CHECK_THROWS_AS(detect_extrema(std::vector<double>(10, 0.0), bad), InvalidInput);
  bad = ExtremaOptions{};
  bad.prominence = 1.0;
  CHECK_THROWS_AS(detect_extrema(std::vector<double>(10, 0.0), bad), InvalidInput);
  CHECK(flagged(detect_extrema(std::vector<double>(10, 2.0))) == 0);

  // Masked frames are skipped: an unvoiced zero between two voiced ramps is no valley.
  const std::vector<double> pitch{100, 110, 120, 0, 130, 140, 150, 160, 170};
  const bool mask[] = {true, true, true, false, true, true, true, true, true};
  CHECK(detect_extrema(pitch)[3] == 1.0);
  CHECK(flagged(detect_extrema(pitch, {}, mask)) == 0);
}

TEST_CASE("polarity frame examples") {
  PolarityLexicon lex;
  lex.set("bad", -0.8);
  lex.set("good", 0.5);
  const std::vector<WordTiming> neutral{{"the", 0.0, 0.5}, {"cat", 0.5, 1.0}};
  const auto z = polarity_frames(neutral, lex, 1.0, 10);
  CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));

  const std::vector<WordTiming> one{{"bad", 0.2, 0.4}};
  const auto p = polarity_frames(one, lex, 1.0, 10);
  for (int t = 0; t < 10; ++t) CHECK(p[static_cast<std::size_t>(t)] == doctest::Approx(t >= 2 && t <= 4 ? 0.8 : 0.0));

  const std::vector<WordTiming> pair{{"good", 0.0, 0.3}, {"bad", 0.3, 0.6}};
  const auto q = polarity_frames(pair, lex, 1.0, 10);
  CHECK(q[3] == doctest::Approx(0.8));
  CHECK(q[2] == doctest::Approx(0.5));
  CHECK(q[4] == doctest::Approx(0.8));
}

TEST_CASE("integrated gradients on a linear function is exact") {
  Rng rng(81);
  const Matrix w = gaussian_matrix(5, 3, 1.0, rng);
  const DifferentiableScalar f = [&](const Matrix& x, Matrix* g) {
    if (g) *g = w;
    return x.cwiseProduct(w).sum();
  };
  const Matrix x = gaussian_matrix(5, 3, 1.0, rng);
  const Matrix base = gaussian_matrix(5, 3, 1.0, rng);
  for (int m : {1, 7, 64}) {
    const IgResult r = integrated_gradients(f, x, base, m);
    CHECK((r.attributions - (x - base).cwiseProduct(w)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(r.total - r.delta) < 1e-12);
    CHECK(std::accumulate(r.scores.begin(), r.scores.end(), 0.0) == doctest::Approx(1.0));
  }
}

TEST_CASE("integrated gradients degenerate input falls back to uniform") {
  const DifferentiableScalar f = [](const Matrix& x, Matrix* g) {
    if (g) *g = Matrix::Ones(x.rows(), x.cols());
    return x.sum();
  };
  const IgResult r = integrated_gradients(f, Matrix::Zero(4, 2), Matrix::Zero(4, 2));
  CHECK(r.degenerate);
  for (double s : r.scores) CHECK(s == 0.25);
  CHECK_THROWS_AS(integrated_gradients(f, Matrix::Zero(4, 2), Matrix::Zero(4, 2), 0), InvalidInput);
}

TEST_CASE("probe logit gradient and IG completeness on a trained probe") {
  const auto& s = fixture::small_corpus();
  const auto raw = raw_representations(s.corpus);
  ProbeConfig pc;
  pc.epochs = 3;
  UtteranceProbe probe;
  probe_utterance(raw, fixture::labels(s.corpus, Task::Emotion), 4, fixture::small_split().train,
                  fixture::small_split().test, pc, &probe);
  const auto& layers = raw[fixture::small_split().test.front()];
  const Matrix x = concat_layers(layers);
  const DifferentiableScalar f = probe_logit(probe, layers.size(), 1);
  Matrix g;
  f(x, &g);
  const Matrix numeric = oracle::numeric_gradient([&](const Matrix& v) { return f(v, nullptr); }, x);
  CHECK(oracle::relative_error(g, numeric) < 1e-6);

  const IgResult r = integrated_gradients(f, x, Matrix::Zero(x.rows(), x.cols()), 256);
  CHECK(std::abs(r.total - r.delta) <= 0.01 * std::abs(r.delta));
  CHECK(std::abs(std::accumulate(r.scores.begin(), r.scores.end(), 0.0) - 1.0) < 1e-6);
  CHECK(std::all_of(r.scores.begin(), r.scores.end(), [](double v) { return v >= 0.0; }));
}

TEST_CASE("agreement examples") {
  const std::vector<double> feature{0, 1, 0, 1, 1};
  const std::vector<double> uniform(5, 0.2);
  CHECK(agreement(uniform, feature) == doctest::Approx(0.6));
  const std::vector<double> spike{0, 0, 0, 1, 0};
  CHECK(agreement(spike, feature) == 1.0);
  const std::vector<double> ones(5, 1.0);
  const std::vector<double> scores{0.1, 0.2, 0.3, 0.15, 0.25};
  CHECK(agreement(scores, ones) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(agreement(scores, std::vector<double>(4, 1.0)), InvalidInput);
}

TEST_CASE("attribution result over a planted-cue record") {
  SynthConfig sc = fixture::small_config();
  sc.utterance_count = 120;
  sc.planted_cues = true;
  const SynthCorpus syn = synth_generate(sc);
  const Split split = split_by_id(syn.corpus);
  Stage1Config c1 = fixture::quick_stage1(2);
  auto s1 = std::make_shared<const Stage1Model>(train_stage1(syn.corpus, split.train, c1));
  Stage2Config c2;
  c2.epochs = 2;
  const Stage2Model s2 = train_stage2(syn.corpus, split.train, s1, c2);
  ProbeConfig pc;
  pc.epochs = 2;
  const auto text = textual_representations(*s1, syn.corpus);
  const auto raw = raw_representations(syn.corpus);
  const auto labels = fixture::labels(syn.corpus, Task::Emotion);
  const TextualAttention ta = train_textual_attention(text, labels, 4, split.train, split.test, pc);
  UtteranceProbe ig;
  probe_utterance(raw, labels, 4, split.train, split.test, pc, &ig);
  AttributionInputs in;
  in.acoustic = &s2;
  in.textual = &ta;
  in.ig_classifier = &ig;
  in.lexicon = &syn.lexicon;

  const std::size_t i = split.test.front();
  const AttributionResult r = attribute_record(syn.corpus.records[i], raw[i], in);
  const std::size_t frames = syn.corpus.records[i].hidden->frame_count();
  CHECK(r.frames() == frames);
  for (const auto& method : kScoreMethods) {
    const auto& v = r.scores.at(method);
    REQUIRE(v.size() == frames);
    CHECK(std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0) < 1e-6);
    CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; }));
  }
  for (const auto& feature : kFeatureNames) {
    REQUIRE(r.features.at(feature).has_value());
    for (double x : *r.features.at(feature)) CHECK((x >= 0.0 && x <= 1.0));
  }
  const std::string csv = r.to_csv();
  CHECK(csv.substr(0, csv.find('\n')) ==
        "frame,acoustic,textual,ig,uniform,intensity_extremum,pitch_extremum,polarity");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(frames) + 1);

  AgreementTable table;
  table.add(r);
  table.add(r);
  CHECK(table.mean("uniform", "polarity") == doctest::Approx(r.agreements.at("uniform").at("polarity")));

  const auto weights = textual_attention_scores(ta, text, split.test);
  for (const Vector& w : weights) CHECK(std::abs(w.sum() - 1.0) < 1e-6);
}

TEST_CASE("textual attention favours planted polar words") {
  SynthConfig sc = fixture::small_config();
  sc.utterance_count = 800;
  sc.planted_cues = true;
  const SynthCorpus syn = synth_generate(sc);
  const Corpus& c = syn.corpus;
  const Split split = split_by_id(c);
  auto s1 = std::make_shared<const Stage1Model>(train_stage1(c, split.train, fixture::quick_stage1(20)));
  ProbeConfig pc;
  pc.epochs = 20;
  const auto text = textual_representations(*s1, c);
  const TextualAttention ta =
      train_textual_attention(text, fixture::labels(c, Task::Emotion), 4, split.train, split.test, pc);
  const auto weights = textual_attention_scores(ta, text, split.test);
  int polar = 0, above = 0;
  double lift = 0.0;
  for (std::size_t k = 0; k < split.test.size(); ++k) {
    const auto& r = c.records[split.test[k]];
    const auto pol = polarity_frames(*r.word_timings, syn.lexicon, r.duration, static_cast<int>(r.frame_count()));
    double mass = 0.0;
    int n = 0;
    for (std::size_t t = 0; t < pol.size(); ++t)
      if (pol[t] > 0.0) {
        mass += weights[k](static_cast<Eigen::Index>(t));
        ++n;
      }
    if (n == 0) continue;
    ++polar;
    const double ratio = mass / n * static_cast<double>(pol.size());
    lift += ratio;
    if (ratio > 1.0) ++above;
  }
  REQUIRE(polar > 0);
  MESSAGE("polar frames above the utterance mean in " << above << " of " << polar << " utterances");
  CHECK(lift / polar > 1.0);
  CHECK(above >= 0.8 * polar);
}
