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

#include "vibsplit/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "vibsplit/error.hpp"

namespace vibsplit {

namespace {

std::vector<double> extrema_dense(const std::vector<double>& x, const ExtremaOptions& o) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  if (n < static_cast<std::size_t>(o.window)) {
    spdlog::warn("detect_extrema: series of {} frames is shorter than the window {}", n, o.window);
    return out;
  }
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  if (range <= 0.0) return out;
  const std::size_t half = static_cast<std::size_t>(o.window / 2);
  for (std::size_t t = 1; t + 1 < n; ++t) {
    const std::size_t b = t >= half ? t - half : 0;
    const std::size_t e = std::min(n - 1, t + half);
    bool is_max = true, is_min = true;
    double left_min = x[t], left_max = x[t], right_min = x[t], right_max = x[t];
    for (std::size_t s = b; s <= e; ++s) {
      if (s == t) continue;
      if (x[s] >= x[t]) is_max = false;
      if (x[s] <= x[t]) is_min = false;
      if (s < t) {
        left_min = std::min(left_min, x[s]);
        left_max = std::max(left_max, x[s]);
      } else {
        right_min = std::min(right_min, x[s]);
        right_max = std::max(right_max, x[s]);
      }
    }
    double prominence = 0.0;
    if (is_max) prominence = x[t] - std::max(left_min, right_min);
    if (is_min) prominence = std::min(left_max, right_max) - x[t];
    if ((is_max || is_min) && prominence >= o.prominence * range) out[t] = 1.0;
  }
  return out;
}

}  // namespace

std::vector<double> detect_extrema(std::span<const double> series, const ExtremaOptions& options,
                                   std::span<const bool> mask) {
  if (options.window < 3 || options.window % 2 == 0)
    throw InvalidInput("detect_extrema: window must be odd and at least 3");
  if (!(options.prominence > 0.0 && options.prominence < 1.0))
    throw InvalidInput("detect_extrema: prominence fraction must lie in (0, 1)");
  if (!mask.empty() && mask.size() != series.size())
    throw InvalidInput("detect_extrema: mask length does not match the series");
  std::vector<double> kept;
  std::vector<std::size_t> where;
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (!mask.empty() && !mask[t]) continue;
    kept.push_back(series[t]);
    where.push_back(t);
  }
  const std::vector<double> flags = extrema_dense(kept, options);
  std::vector<double> out(series.size(), 0.0);
  for (std::size_t i = 0; i < flags.size(); ++i) out[where[i]] = flags[i];
  return out;
}

std::vector<double> polarity_frames(std::span<const WordTiming> timings,
                                    const PolarityLexicon& lexicon, double total_time, int frames) {
  std::vector<double> out(static_cast<std::size_t>(std::max(frames, 0)), 0.0);
  for (const AlignedWord& w : align_words_to_frames(timings, total_time, frames)) {
    const double magnitude = std::abs(lexicon.polarity(w.word));
    const int last = std::min(w.f_end, frames - 1);
    for (int f = w.f_start; f <= last; ++f)
      out[static_cast<std::size_t>(f)] = std::max(out[static_cast<std::size_t>(f)], magnitude);
  }
  return out;
}

IgResult integrated_gradients(const DifferentiableScalar& f, const Matrix& x,
                              const Matrix& baseline, int steps) {
  if (steps < 1) throw InvalidInput("integrated_gradients: steps must be positive");
  if (x.rows() != baseline.rows() || x.cols() != baseline.cols())
    throw InvalidInput("integrated_gradients: baseline shape does not match the input");
  const Matrix diff = x - baseline;
  Matrix grad_sum = Matrix::Zero(x.rows(), x.cols());
  Matrix grad;
  for (int k = 0; k < steps; ++k) {
    const double alpha = (k + 0.5) / steps;
    grad.setZero(x.rows(), x.cols());
    f(baseline + alpha * diff, &grad);
    grad_sum += grad;
  }
  IgResult r;
  r.attributions = diff.cwiseProduct(grad_sum) / static_cast<double>(steps);
  r.total = r.attributions.sum();
  r.delta = f(x, nullptr) - f(baseline, nullptr);
  const Eigen::Index frames = x.rows();
  r.scores.resize(static_cast<std::size_t>(frames));
  double norm = 0.0;
  for (Eigen::Index t = 0; t < frames; ++t) {
    r.scores[static_cast<std::size_t>(t)] = std::abs(r.attributions.row(t).sum());
    norm += r.scores[static_cast<std::size_t>(t)];
  }
  if (norm > 0.0) {
    for (double& s : r.scores) s /= norm;
  } else {
    spdlog::warn("integrated_gradients: all attributions are zero; using uniform scores");
    r.degenerate = true;
    std::fill(r.scores.begin(), r.scores.end(), frames ? 1.0 / static_cast<double>(frames) : 0.0);
  }
  return r;
}

Matrix concat_layers(const LayerStack& layers) {
  if (layers.empty()) throw InvalidInput("concat_layers: no layers");
  const Eigen::Index t = layers.front().rows(), d = layers.front().cols();
  Matrix out(t, d * static_cast<Eigen::Index>(layers.size()));
  for (std::size_t l = 0; l < layers.size(); ++l)
    out.middleCols(static_cast<Eigen::Index>(l) * d, d) = layers[l];
  return out;
}

DifferentiableScalar probe_logit(const UtteranceProbe& probe, std::size_t layer_count, int cls) {
  return [probe = UtteranceProbe(probe), layer_count, cls](const Matrix& x, Matrix* grad) mutable {
    const Eigen::Index d = x.cols() / static_cast<Eigen::Index>(layer_count);
    LayerStack layers(layer_count);
    for (std::size_t l = 0; l < layer_count; ++l)
      layers[l] = x.middleCols(static_cast<Eigen::Index>(l) * d, d);
    const Matrix input = probe.input(layers);
    const PoolResult pool = attention_pool(input, probe.pooler);
    const RowVector logits = probe.classifier.forward_row(pool.pooled);
    if (grad) {
      RowVector d_logits = RowVector::Zero(logits.size());
      d_logits(cls) = 1.0;
      const RowVector d_pooled = probe.classifier.backward_row(pool.pooled, d_logits);
      const Matrix d_input = attention_pool_backward(input, probe.pooler, pool, d_pooled);
      const Vector w = layer_count > 1 ? layer_weights(probe.layer_logits.value.col(0))
                                       : Vector::Ones(1);
      grad->resize(x.rows(), x.cols());
      for (std::size_t l = 0; l < layer_count; ++l)
        grad->middleCols(static_cast<Eigen::Index>(l) * d, d) = w(static_cast<Eigen::Index>(l)) * d_input;
    }
    return logits(cls);
  };
}

TextualAttention train_textual_attention(const RepresentationSet& textual,
                                         std::span<const int> labels, int classes,
                                         std::span<const std::size_t> train,
                                         std::span<const std::size_t> test, const ProbeConfig& cfg) {
  TextualAttention out;
  out.result = probe_utterance(textual, labels, classes, train, test, cfg, &out.probe);
  out.result.source = "textual";
  return out;
}

std::vector<Vector> textual_attention_scores(const TextualAttention& model,
                                             const RepresentationSet& textual,
                                             std::span<const std::size_t> records) {
  std::vector<Vector> out;
  out.reserve(records.size());
  for (std::size_t i : records) out.push_back(model.probe.predict(textual.at(i)).attention);
  return out;
}

double agreement(std::span<const double> scores, std::span<const double> feature) {
  if (scores.size() != feature.size())
    throw InvalidInput("agreement: " + std::to_string(scores.size()) + " scores vs " +
                       std::to_string(feature.size()) + " feature frames");
  double s = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) s += scores[t] * feature[t];
  return s;
}

std::size_t AttributionResult::frames() const {
  for (const auto& [_, s] : scores) return s.size();
  return 0;
}

void AttributionResult::compute_agreements() {
  agreements.clear();
  for (const auto& [method, s] : scores)
    for (const auto& [feature, f] : features)
      if (f) agreements[method][feature] = agreement(s, *f);
}

std::string AttributionResult::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["frames"] = frames();
  for (const auto& [method, s] : scores) j["scores"][method] = s;
  for (const auto& [feature, f] : features)
    j["features"][feature] = f ? nlohmann::json(*f) : nlohmann::json(nullptr);
  for (const auto& [method, row] : agreements)
    for (const auto& [feature, v] : row) j["agreement"][method][feature] = v;
  return j.dump(2);
}

std::string AttributionResult::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "frame";
  for (const auto& m : kScoreMethods) out << ',' << m;
  for (const auto& f : kFeatureNames) out << ',' << f;
  out << '\n';
  for (std::size_t t = 0; t < frames(); ++t) {
    out << t;
    for (const auto& m : kScoreMethods) {
      out << ',';
      if (auto it = scores.find(m); it != scores.end()) out << it->second[t];
    }
    for (const auto& f : kFeatureNames) {
      out << ',';
      if (auto it = features.find(f); it != features.end() && it->second) out << (*it->second)[t];
    }
    out << '\n';
  }
  return out.str();
}

void AgreementTable::add(const AttributionResult& result) {
  for (const auto& [method, row] : result.agreements)
    for (const auto& [feature, v] : row) {
      auto& cell = cells[method][feature];
      cell.first += v;
      ++cell.second;
    }
}

double AgreementTable::mean(const std::string& method, const std::string& feature) const {
  const auto m = cells.find(method);
  if (m == cells.end()) return std::nan("");
  const auto f = m->second.find(feature);
  if (f == m->second.end() || f->second.second == 0) return std::nan("");
  return f->second.first / static_cast<double>(f->second.second);
}

std::string AgreementTable::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "method,feature,mean_agreement,records\n";
  for (const auto& m : kScoreMethods)
    for (const auto& f : kFeatureNames) {
      const auto mi = cells.find(m);
      if (mi == cells.end()) continue;
      const auto fi = mi->second.find(f);
      if (fi == mi->second.end()) continue;
      out << m << ',' << f << ',' << mean(m, f) << ',' << fi->second.second << '\n';
    }
  return out.str();
}

AttributionResult attribute_record(const UtteranceRecord& record, const LayerStack& layers,
                                   const AttributionInputs& inputs) {
  AttributionResult r;
  r.id = record.id;
  const auto frames = static_cast<std::size_t>(layers.front().rows());
  auto as_vector = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };

  if (inputs.acoustic) r.scores["acoustic"] = as_vector(predict(*inputs.acoustic, layers).attention);
  if (inputs.textual && inputs.acoustic)
    r.scores["textual"] = as_vector(
        inputs.textual->probe.predict({textual_latent(*inputs.acoustic->stage1, layers)}).attention);
  if (inputs.ig_classifier) {
    const Prediction p = inputs.ig_classifier->predict(layers);
    Eigen::Index cls = 0;
    p.probabilities.maxCoeff(&cls);
    const Matrix x = concat_layers(layers);
    r.scores["ig"] = integrated_gradients(probe_logit(*inputs.ig_classifier, layers.size(),
                                                      static_cast<int>(cls)),
                                          x, Matrix::Zero(x.rows(), x.cols()), inputs.ig_steps)
                         .scores;
  }
  r.scores["uniform"] = std::vector<double>(frames, 1.0 / static_cast<double>(frames));

  if (record.intensity) {
    r.features["intensity_extremum"] = detect_extrema(*record.intensity, inputs.extrema);
  } else {
    spdlog::warn("attribute: '{}' has no intensity series; extrema dimension omitted", record.id);
    r.features["intensity_extremum"] = std::nullopt;
  }
  if (record.pitch) {
    const std::size_t n = record.pitch->size();
    const auto voiced = std::make_unique<bool[]>(n);
    for (std::size_t t = 0; t < n; ++t) voiced[t] = (*record.pitch)[t] > 0.0;
    r.features["pitch_extremum"] =
        detect_extrema(*record.pitch, inputs.extrema, std::span<const bool>(voiced.get(), n));
  } else {
    spdlog::warn("attribute: '{}' has no pitch series; extrema dimension omitted", record.id);
    r.features["pitch_extremum"] = std::nullopt;
  }
  if (record.word_timings && inputs.lexicon) {
    r.features["polarity"] = polarity_frames(*record.word_timings, *inputs.lexicon,
                                             record.duration, static_cast<int>(frames));
  } else {
    spdlog::warn("attribute: '{}' has no word timings or lexicon; polarity dimension omitted",
                 record.id);
    r.features["polarity"] = std::nullopt;
  }
  r.compute_agreements();
  return r;
}

}  // namespace vibsplit
