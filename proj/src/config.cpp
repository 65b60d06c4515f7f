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

#include "vibsplit/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "vibsplit/error.hpp"

namespace vibsplit {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text, const std::string& origin) {
  KeyValueFile out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!value.empty() && value.front() == '"') {
      if (value.size() < 2 || value.back() != '"')
        throw ConfigError(where + ": unterminated string for '" + key + "'");
      value = value.substr(1, value.size() - 2);
    }
    out.values_[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::optional<double> parse_optional_double(const std::string& key, const std::string& v) {
  if (v.empty() || v == "none") return std::nullopt;
  return parse_number<double>(key, v);
}

std::optional<int> parse_layer(const std::string& key, const std::string& v) {
  if (v.empty() || v == "weighted") return std::nullopt;
  return parse_number<int>(key, v);
}

std::optional<bool> parse_optional_bool(const std::string& key, const std::string& v) {
  if (v.empty() || v == "auto") return std::nullopt;
  return parse_bool(key, v);
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename T, typename Field>
Setter number(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    std::invoke(field, c) = parse_number<T>(k, v);
  };
}

template <typename Field>
Setter boolean(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    std::invoke(field, c) = parse_bool(k, v);
  };
}

template <typename Field>
Setter text(Field field) {
  return [field](RunConfig& c, const std::string&, const std::string& v) {
    std::invoke(field, c) = v;
  };
}

void add_optim(std::map<std::string, Setter>& s, const std::string& section,
               std::function<OptimConfig&(RunConfig&)> get) {
  auto num = [&](const char* key, double OptimConfig::*field) {
    s[section + "." + key] = [get, field](RunConfig& c, const std::string& k, const std::string& v) {
      get(c).*field = parse_number<double>(k, v);
    };
  };
  num("lr", &OptimConfig::lr);
  num("warmup_ratio", &OptimConfig::warmup_ratio);
  num("weight_decay", &OptimConfig::weight_decay);
  num("grad_clip", &OptimConfig::grad_clip);
  num("adam_beta1", &OptimConfig::beta1);
  num("adam_beta2", &OptimConfig::beta2);
  num("adam_eps", &OptimConfig::eps);
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> s;
    s["run.seed"] = number<std::uint64_t>([](RunConfig& c) -> auto& { return c.seed; });
    s["run.out"] = [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; };
    s["run.layer"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.layer = parse_layer(k, v);
    };
    s["run.sweep"] = boolean([](RunConfig& c) -> auto& { return c.sweep; });
    s["run.workers"] = number<int>([](RunConfig& c) -> auto& { return c.workers; });

    s["corpus.manifest"] = [](RunConfig& c, const std::string&, const std::string& v) { c.manifest = v; };
    s["corpus.vocab"] = [](RunConfig& c, const std::string&, const std::string& v) { c.vocab = v; };

#define SYNTH_INT(name) s["synth." #name] = number<int>([](RunConfig& c) -> auto& { return c.synth.name; })
#define SYNTH_DBL(name) s["synth." #name] = number<double>([](RunConfig& c) -> auto& { return c.synth.name; })
#define SYNTH_BOOL(name) s["synth." #name] = boolean([](RunConfig& c) -> auto& { return c.synth.name; })
    SYNTH_INT(vocab_size);
    SYNTH_INT(speaker_count);
    SYNTH_INT(emotion_count);
    SYNTH_INT(utterance_count);
    SYNTH_INT(frames_per_symbol_min);
    SYNTH_INT(frames_per_symbol_max);
    SYNTH_INT(width);
    SYNTH_INT(layer_count);
    SYNTH_INT(mixing_depth);
    SYNTH_DBL(noise_scale);
    s["synth.seed"] = number<std::uint64_t>([](RunConfig& c) -> auto& { return c.synth.seed; });
    SYNTH_INT(sentence_count);
    SYNTH_INT(lexicon_size);
    SYNTH_INT(words_per_sentence_min);
    SYNTH_INT(words_per_sentence_max);
    SYNTH_INT(letters_per_word_min);
    SYNTH_INT(letters_per_word_max);
    SYNTH_INT(polar_word_count);
    SYNTH_INT(silence_frames_min);
    SYNTH_INT(silence_frames_max);
    SYNTH_DBL(frame_rate);
    SYNTH_DBL(symbol_gain);
    SYNTH_DBL(speaker_gain);
    SYNTH_DBL(emotion_gain);
    SYNTH_DBL(prosody_gain);
    SYNTH_BOOL(planted_cues);
    SYNTH_INT(informative_layer);
    SYNTH_BOOL(one_hot);
#undef SYNTH_INT
#undef SYNTH_DBL
#undef SYNTH_BOOL

    s["stage1.d"] = number<int>([](RunConfig& c) -> auto& { return c.stage1.d; });
    s["stage1.epochs"] = number<int>([](RunConfig& c) -> auto& { return c.stage1.epochs; });
    s["stage1.beta_start"] = number<double>([](RunConfig& c) -> auto& { return c.stage1.beta_start; });
    s["stage1.beta_end"] = number<double>([](RunConfig& c) -> auto& { return c.stage1.beta_end; });
    s["stage1.beta_constant"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.stage1.beta_constant = parse_optional_double(k, v);
    };
    s["stage1.init_gain"] = number<double>([](RunConfig& c) -> auto& { return c.stage1.init_gain; });
    s["stage1.blank_bias"] = number<double>([](RunConfig& c) -> auto& { return c.stage1.blank_bias; });
    add_optim(s, "stage1", [](RunConfig& c) -> OptimConfig& { return c.stage1.optim; });

    s["stage2.task"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.stage2.task = parse_task(v);
    };
    s["stage2.d"] = number<int>([](RunConfig& c) -> auto& { return c.stage2.d; });
    s["stage2.epochs"] = number<int>([](RunConfig& c) -> auto& { return c.stage2.epochs; });
    s["stage2.batch_size"] = number<int>([](RunConfig& c) -> auto& { return c.stage2.batch_size; });
    s["stage2.beta_start"] = number<double>([](RunConfig& c) -> auto& { return c.stage2.beta_start; });
    s["stage2.beta_end"] = number<double>([](RunConfig& c) -> auto& { return c.stage2.beta_end; });
    s["stage2.beta_constant"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.stage2.beta_constant = parse_optional_double(k, v);
    };
    s["stage2.init_gain"] = number<double>([](RunConfig& c) -> auto& { return c.stage2.init_gain; });
    s["stage2.undersample"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.stage2.undersample = parse_optional_bool(k, v);
    };
    s["stage2.textual_conditioning"] =
        boolean([](RunConfig& c) -> auto& { return c.stage2.use_textual_conditioning; });
    add_optim(s, "stage2", [](RunConfig& c) -> OptimConfig& { return c.stage2.optim; });

    s["probe.epochs"] = number<int>([](RunConfig& c) -> auto& { return c.probe.epochs; });
    s["probe.batch_size"] = number<int>([](RunConfig& c) -> auto& { return c.probe.batch_size; });
    s["probe.blank_bias"] = number<double>([](RunConfig& c) -> auto& { return c.probe.blank_bias; });
    s["probe.task"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.probe_task = parse_task(v);
    };
    add_optim(s, "probe", [](RunConfig& c) -> OptimConfig& { return c.probe.optim; });

    s["attribution.lexicon"] = [](RunConfig& c, const std::string&, const std::string& v) { c.lexicon = v; };
    s["attribution.window"] = number<int>([](RunConfig& c) -> auto& { return c.extrema.window; });
    s["attribution.prominence"] = number<double>([](RunConfig& c) -> auto& { return c.extrema.prominence; });
    s["attribution.ig_steps"] = number<int>([](RunConfig& c) -> auto& { return c.ig_steps; });
    s["attribution.max_records"] = number<int>([](RunConfig& c) -> auto& { return c.max_records; });
    return s;
  }();
  return table;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

template <typename T>
std::string optional_text(const std::optional<T>& v, const std::string& none) {
  if (!v) return quote(none);
  std::ostringstream out;
  out.precision(17);
  if constexpr (std::is_same_v<T, bool>)
    out << (*v ? "true" : "false");
  else
    out << *v;
  return out.str();
}

void write_optim(std::ostream& out, const OptimConfig& o) {
  out << "lr = " << o.lr << "\nwarmup_ratio = " << o.warmup_ratio
      << "\nweight_decay = " << o.weight_decay << "\ngrad_clip = " << o.grad_clip
      << "\nadam_beta1 = " << o.beta1 << "\nadam_beta2 = " << o.beta2 << "\nadam_eps = " << o.eps
      << '\n';
}

}  // namespace

RunConfig RunConfig::from(const KeyValueFile& file) {
  RunConfig c;
  const auto& table = setters();
  for (const auto& [key, value] : file.values()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(c, key, value);
  }
  if (c.workers < 1) throw ConfigError("config: run.workers must be at least 1");
  if (c.ig_steps < 1) throw ConfigError("config: attribution.ig_steps must be at least 1");
  if (c.extrema.window < 3 || c.extrema.window % 2 == 0)
    throw ConfigError("config: attribution.window must be odd and at least 3");
  if (!(c.extrema.prominence > 0.0 && c.extrema.prominence < 1.0))
    throw ConfigError("config: attribution.prominence must lie in (0, 1)");
  if (c.probe.epochs < 1) throw ConfigError("config: probe.epochs must be positive");
  if (c.manifest.empty()) c.synth.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return from(KeyValueFile::load(path));
}

std::string RunConfig::to_toml() const {
  std::ostringstream out;
  out.precision(17);
  out << "[run]\nseed = " << seed << "\nout = " << quote(this->out.string())
      << "\nlayer = " << optional_text(layer, "weighted") << "\nsweep = " << (sweep ? "true" : "false")
      << "\nworkers = " << workers << "\n\n";
  out << "[corpus]\nmanifest = " << quote(manifest.string()) << "\nvocab = " << quote(vocab.string())
      << "\n\n";
  const SynthConfig& s = synth;
  out << "[synth]\nvocab_size = " << s.vocab_size << "\nspeaker_count = " << s.speaker_count
      << "\nemotion_count = " << s.emotion_count << "\nutterance_count = " << s.utterance_count
      << "\nframes_per_symbol_min = " << s.frames_per_symbol_min
      << "\nframes_per_symbol_max = " << s.frames_per_symbol_max << "\nwidth = " << s.width
      << "\nlayer_count = " << s.layer_count << "\nmixing_depth = " << s.mixing_depth
      << "\nnoise_scale = " << s.noise_scale << "\nseed = " << s.seed
      << "\nsentence_count = " << s.sentence_count << "\nlexicon_size = " << s.lexicon_size
      << "\nwords_per_sentence_min = " << s.words_per_sentence_min
      << "\nwords_per_sentence_max = " << s.words_per_sentence_max
      << "\nletters_per_word_min = " << s.letters_per_word_min
      << "\nletters_per_word_max = " << s.letters_per_word_max
      << "\npolar_word_count = " << s.polar_word_count
      << "\nsilence_frames_min = " << s.silence_frames_min
      << "\nsilence_frames_max = " << s.silence_frames_max << "\nframe_rate = " << s.frame_rate
      << "\nsymbol_gain = " << s.symbol_gain << "\nspeaker_gain = " << s.speaker_gain
      << "\nemotion_gain = " << s.emotion_gain << "\nprosody_gain = " << s.prosody_gain
      << "\nplanted_cues = " << (s.planted_cues ? "true" : "false")
      << "\ninformative_layer = " << s.informative_layer
      << "\none_hot = " << (s.one_hot ? "true" : "false") << "\n\n";
  out << "[stage1]\nd = " << stage1.d << "\nepochs = " << stage1.epochs
      << "\nbeta_start = " << stage1.beta_start << "\nbeta_end = " << stage1.beta_end
      << "\nbeta_constant = " << optional_text(stage1.beta_constant, "none")
      << "\ninit_gain = " << stage1.init_gain << "\nblank_bias = " << stage1.blank_bias << '\n';
  write_optim(out, stage1.optim);
  out << "\n[stage2]\ntask = " << quote(task_name(stage2.task)) << "\nd = " << stage2.d
      << "\nepochs = " << stage2.epochs << "\nbatch_size = " << stage2.batch_size
      << "\nbeta_start = " << stage2.beta_start << "\nbeta_end = " << stage2.beta_end
      << "\nbeta_constant = " << optional_text(stage2.beta_constant, "none")
      << "\ninit_gain = " << stage2.init_gain
      << "\nundersample = " << optional_text(stage2.undersample, "auto")
      << "\ntextual_conditioning = " << (stage2.use_textual_conditioning ? "true" : "false")
      << '\n';
  write_optim(out, stage2.optim);
  out << "\n[probe]\ntask = " << quote(task_name(probe_task)) << "\nepochs = " << probe.epochs
      << "\nbatch_size = " << probe.batch_size << "\nblank_bias = " << probe.blank_bias << '\n';
  write_optim(out, probe.optim);
  out << "\n[attribution]\nlexicon = " << quote(lexicon.string()) << "\nwindow = " << extrema.window
      << "\nprominence = " << extrema.prominence << "\nig_steps = " << ig_steps
      << "\nmax_records = " << max_records << '\n';
  return out.str();
}

Stage1Config RunConfig::stage1_config() const {
  Stage1Config c = stage1;
  c.fixed_layer = layer;
  c.seed = layer_seed(seed, layer);
  return c;
}

Stage2Config RunConfig::stage2_config() const {
  Stage2Config c = stage2;
  c.fixed_layer = layer;
  c.seed = layer_seed(seed, layer);
  return c;
}

ProbeConfig RunConfig::probe_config() const {
  ProbeConfig c = probe;
  c.seed = seed;
  return c;
}

LayerwiseConfig RunConfig::layerwise_config() const {
  LayerwiseConfig c;
  c.stage1 = stage1;
  c.stage2 = stage2;
  c.probe = probe;
  c.probe_task = probe_task;
  c.seed = seed;
  c.workers = workers;
  return c;
}

}  // namespace vibsplit
