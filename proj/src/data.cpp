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

#include "vibsplit/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vibsplit/error.hpp"
#include "vibsplit/nn.hpp"

namespace vibsplit {

using nlohmann::json;

const char* task_name(Task task) {
  switch (task) {
    case Task::Emotion: return "emotion";
    case Task::Speaker: return "speaker";
    case Task::Gender: return "gender";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "emotion") return Task::Emotion;
  if (name == "speaker") return Task::Speaker;
  if (name == "gender") return Task::Gender;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected emotion, speaker or gender)");
}

std::optional<int> UtteranceLabels::get(Task task) const {
  switch (task) {
    case Task::Emotion: return emotion;
    case Task::Speaker: return speaker;
    case Task::Gender: return gender;
  }
  return std::nullopt;
}

void validate_record(const UtteranceRecord& r, const Vocabulary& vocab) {
  const std::string where = "record '" + r.id + "': ";
  if (r.id.empty()) throw InvalidInput("record with empty id");
  for (char c : r.transcript)
    if (!vocab.contains(c))
      throw InvalidInput(where + "transcript symbol '" + std::string(1, c) +
                         "' is not in the vocabulary");
  const std::uint32_t frames = r.shape[1];
  if (frames > 0) {
    if (r.pitch && r.pitch->size() != frames)
      throw InvalidInput(where + "frame_series.pitch has " + std::to_string(r.pitch->size()) +
                         " values, expected " + std::to_string(frames));
    if (r.intensity && r.intensity->size() != frames)
      throw InvalidInput(where + "frame_series.intensity has " +
                         std::to_string(r.intensity->size()) + " values, expected " +
                         std::to_string(frames));
  }
  if (r.word_timings) {
    if (!(r.duration > 0.0)) throw InvalidInput(where + "word_timings require a positive duration");
    for (const auto& w : *r.word_timings) {
      if (w.start < 0.0 || w.end > r.duration || w.start >= w.end)
        throw InvalidInput(where + "word '" + w.word + "' timing [" + std::to_string(w.start) +
                           ", " + std::to_string(w.end) + "] is not nested in [0, " +
                           std::to_string(r.duration) + "]");
    }
  }
}

HiddenStateTensor load_hidden_states(const UtteranceRecord& record) {
  HiddenStateTensor t = record.hidden ? *record.hidden : read_hidden_states(record.hidden_path);
  const auto& s = record.shape;
  if (s[0] != 0 && (t.layer_count() != s[0] || t.frame_count() != s[1] || t.width() != s[2]))
    throw FormatError("record '" + record.id + "': tensor shape [" + std::to_string(t.layer_count()) +
                      ", " + std::to_string(t.frame_count()) + ", " + std::to_string(t.width()) +
                      "] does not match declared shape [" + std::to_string(s[0]) + ", " +
                      std::to_string(s[1]) + ", " + std::to_string(s[2]) + "]");
  const auto frames = t.frame_count();
  if ((record.pitch && record.pitch->size() != frames) ||
      (record.intensity && record.intensity->size() != frames))
    throw FormatError("record '" + record.id + "': frame series length differs from tensor frames");
  return t;
}

void Corpus::materialize() {
  for (auto& r : records) {
    if (r.hidden) continue;
    auto t = std::make_shared<HiddenStateTensor>(load_hidden_states(r));
    r.shape = {t->layer_count(), t->frame_count(), t->width()};
    r.hidden = std::move(t);
  }
}

std::uint32_t Corpus::layer_count() const {
  if (records.empty()) throw InvalidInput("empty corpus");
  if (records.front().shape[0] == 0)
    return load_hidden_states(records.front()).layer_count();
  return records.front().shape[0];
}

std::uint32_t Corpus::width() const {
  if (records.empty()) throw InvalidInput("empty corpus");
  if (records.front().shape[2] == 0) return load_hidden_states(records.front()).width();
  return records.front().shape[2];
}

namespace {

template <typename T>
T get_field(const json& row, const char* field, std::size_t line) {
  try {
    return row.at(field).get<T>();
  } catch (const json::exception&) {
    throw FormatError("manifest line " + std::to_string(line) + ": missing or invalid field '" +
                      field + "'");
  }
}

std::optional<int> optional_int(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  if (!obj.at(key).is_number_integer())
    throw FormatError("manifest line " + std::to_string(line) + ": field 'labels." + key +
                      "' must be an integer");
  return obj.at(key).get<int>();
}

UtteranceRecord parse_row(const json& row, std::size_t line, const std::filesystem::path& base) {
  UtteranceRecord r;
  r.id = get_field<std::string>(row, "id", line);
  r.transcript = get_field<std::string>(row, "transcript", line);
  r.hidden_path = base / get_field<std::string>(row, "hidden_ref", line);
  r.duration = row.contains("duration") ? get_field<double>(row, "duration", line) : 0.0;
  if (row.contains("shape")) {
    const auto shape = get_field<std::vector<std::uint32_t>>(row, "shape", line);
    if (shape.size() != 3)
      throw FormatError("manifest line " + std::to_string(line) + ": field 'shape' needs 3 entries");
    r.shape = {shape[0], shape[1], shape[2]};
  }
  if (row.contains("labels")) {
    const json& labels = row.at("labels");
    if (!labels.is_object())
      throw FormatError("manifest line " + std::to_string(line) + ": field 'labels' must be an object");
    r.labels.emotion = optional_int(labels, "emotion", line);
    r.labels.speaker = optional_int(labels, "speaker", line);
    r.labels.gender = optional_int(labels, "gender", line);
  }
  if (row.contains("frame_series")) {
    const json& fs = row.at("frame_series");
    try {
      if (fs.contains("pitch")) r.pitch = fs.at("pitch").get<std::vector<double>>();
      if (fs.contains("intensity")) r.intensity = fs.at("intensity").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw FormatError("manifest line " + std::to_string(line) + ": invalid field 'frame_series'");
    }
  }
  if (row.contains("word_timings")) {
    std::vector<WordTiming> timings;
    try {
      for (const auto& w : row.at("word_timings"))
        timings.push_back({w.at(0).get<std::string>(), w.at(1).get<double>(), w.at(2).get<double>()});
    } catch (const json::exception&) {
      throw FormatError("manifest line " + std::to_string(line) +
                        ": invalid field 'word_timings' (expected [word, start, end] triples)");
    }
    r.word_timings = std::move(timings);
  }
  if (row.contains("waveform")) {
    const json& wf = row.at("waveform");
    try {
      r.waveform = WaveformRef{base / wf.at("path").get<std::string>(),
                               wf.at("sample_rate").get<double>()};
    } catch (const json::exception&) {
      throw FormatError("manifest line " + std::to_string(line) + ": invalid field 'waveform'");
    }
  }
  return r;
}

}  // namespace

std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path,
                                           const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<UtteranceRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(text);
    } catch (const json::parse_error& e) {
      throw FormatError("manifest line " + std::to_string(line) + ": " + e.what());
    }
    UtteranceRecord r = parse_row(row, line, base);
    try {
      validate_record(r, vocab);
    } catch (const InvalidInput& e) {
      throw FormatError("manifest line " + std::to_string(line) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

Corpus load_corpus(const std::filesystem::path& manifest,
                   const std::optional<std::filesystem::path>& vocab_path) {
  if (!std::filesystem::exists(manifest))
    throw FormatError("manifest " + manifest.string() + " does not exist");
  Corpus c;
  c.vocab = Vocabulary::load(vocab_path.value_or(manifest.parent_path() / "vocab.txt"));
  c.records = load_manifest(manifest, c.vocab);
  const auto source_file = manifest.parent_path() / "source.txt";
  if (std::filesystem::exists(source_file)) {
    std::ifstream in(source_file);
    std::getline(in, c.source);
  }
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "hidden");
  corpus.vocab.save(dir / "vocab.txt");
  {
    std::ofstream src(dir / "source.txt");
    src << corpus.source << '\n';
  }
  std::ofstream out(dir / "manifest.jsonl", std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  for (const auto& r : corpus.records) {
    const HiddenStateTensor t = load_hidden_states(r);
    const std::string rel = "hidden/" + r.id + ".hst";
    write_hidden_states(dir / rel, t);
    json row;
    row["id"] = r.id;
    row["hidden_ref"] = rel;
    row["shape"] = {t.layer_count(), t.frame_count(), t.width()};
    row["transcript"] = r.transcript;
    json labels = json::object();
    if (r.labels.emotion) labels["emotion"] = *r.labels.emotion;
    if (r.labels.speaker) labels["speaker"] = *r.labels.speaker;
    if (r.labels.gender) labels["gender"] = *r.labels.gender;
    row["labels"] = labels;
    if (r.pitch || r.intensity) {
      json fs = json::object();
      if (r.pitch) fs["pitch"] = *r.pitch;
      if (r.intensity) fs["intensity"] = *r.intensity;
      row["frame_series"] = fs;
    }
    if (r.word_timings) {
      json wt = json::array();
      for (const auto& w : *r.word_timings) wt.push_back({w.word, w.start, w.end});
      row["word_timings"] = wt;
    }
    row["duration"] = r.duration;
    out << row.dump() << '\n';
  }
}

std::string CorpusFingerprint::representation_key() const {
  return source + ":L" + std::to_string(layers) + ":D" + std::to_string(width);
}

CorpusFingerprint fingerprint(const Corpus& corpus) {
  CorpusFingerprint fp;
  fp.source = corpus.source;
  fp.layers = corpus.layer_count();
  fp.width = corpus.width();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : corpus.records) {
    std::ostringstream row;
    row << r.id << '\x1f' << r.transcript << '\x1f' << r.labels.emotion.value_or(-1) << ','
        << r.labels.speaker.value_or(-1) << ',' << r.labels.gender.value_or(-1) << '\x1f'
        << r.shape[0] << ',' << r.shape[1] << ',' << r.shape[2] << '\x1e';
    h = fnv1a(row.str(), h);
  }
  fp.content = h;
  return fp;
}

Split split_by_id(const Corpus& corpus, double test_fraction) {
  Split s;
  const auto cut = static_cast<std::uint64_t>(std::llround(test_fraction * 10000.0));
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (fnv1a(corpus.records[i].id) % 10000 < cut)
      s.test.push_back(i);
    else
      s.train.push_back(i);
  }
  return s;
}

LayerStack to_layer_stack(const HiddenStateTensor& h) {
  LayerStack out;
  out.reserve(h.layer_count());
  for (std::uint32_t l = 0; l < h.layer_count(); ++l) out.push_back(h.layer(l));
  return out;
}

Vector layer_weights(const Vector& layer_logits) { return softmax(layer_logits); }

Matrix layer_mix(const LayerStack& layers, const Vector& layer_logits) {
  if (static_cast<std::size_t>(layer_logits.size()) != layers.size())
    throw InvalidInput("layer_mix: " + std::to_string(layer_logits.size()) + " logits for " +
                       std::to_string(layers.size()) + " layers");
  if (layers.size() == 1) return layers.front();
  const Vector w = softmax(layer_logits);
  Matrix out = w(0) * layers[0];
  for (std::size_t l = 1; l < layers.size(); ++l) out.noalias() += w(static_cast<Eigen::Index>(l)) * layers[l];
  return out;
}

Matrix layer_mix(const HiddenStateTensor& h, const Vector& layer_logits) {
  if (static_cast<std::uint32_t>(layer_logits.size()) != h.layer_count())
    throw InvalidInput("layer_mix: " + std::to_string(layer_logits.size()) + " logits for " +
                       std::to_string(h.layer_count()) + " layers");
  return layer_mix(to_layer_stack(h), layer_logits);
}

Vector layer_mix_backward(const LayerStack& layers, const Vector& weights, const Matrix& d_mix) {
  Vector dw(static_cast<Eigen::Index>(layers.size()));
  for (std::size_t l = 0; l < layers.size(); ++l)
    dw(static_cast<Eigen::Index>(l)) = layers[l].cwiseProduct(d_mix).sum();
  return softmax_backward(weights, dw);
}

Matrix select_layer(const HiddenStateTensor& h, int layer) {
  if (layer < 0 || static_cast<std::uint32_t>(layer) >= h.layer_count())
    throw InvalidInput("select_layer: layer " + std::to_string(layer) + " out of range [0, " +
                       std::to_string(h.layer_count()) + ")");
  return h.layer(static_cast<std::uint32_t>(layer));
}

}  // namespace vibsplit
