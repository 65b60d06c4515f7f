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

#include "vibsplit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "vibsplit/error.hpp"

namespace vibsplit {

namespace {

constexpr const char* kLetters = "abcdefghijklmnopqrstuvwxyz";
constexpr double kTwoPi = 6.283185307179586;

// Utterance-wide prosody per emotion (angry, happy, neutral, sad); classes
// beyond the fourth draw a random profile.
struct EmotionProfile {
  double pitch_factor;
  double pitch_var;
  double intensity_offset;
  double intensity_var;
  // Localized cue used in planted mode.
  double bump_pitch;
  double bump_intensity;
  int polarity_sign;
};

constexpr EmotionProfile kBaseProfiles[] = {
    {1.15, 0.14, 6.0, 4.0, 0.30, 9.0, -1},
    {1.22, 0.18, 3.0, 3.0, 0.40, 5.0, +1},
    {1.00, 0.05, 0.0, 1.0, -0.20, -5.0, 0},
    {0.88, 0.03, -4.0, 0.8, -0.30, -9.0, -1},
};

double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * NormalSampler::uniform(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

std::string random_word(Rng& rng, const std::string& letters, int min_len, int max_len,
                        char required = 0) {
  const int len = uniform_int(rng, min_len, max_len);
  std::string w;
  const int marker_pos = required ? uniform_int(rng, 0, len - 1) : -1;
  for (int i = 0; i < len; ++i) {
    char c = 0;
    if (i == marker_pos) {
      c = required;
      if (!w.empty() && w.back() == c) {
        // keep the marker; replace the previous letter instead
        char alt = 0;
        do {
          alt = letters[uniform_index(rng, letters.size())];
        } while (alt == c || (w.size() >= 2 && alt == w[w.size() - 2]));
        w.back() = alt;
      }
    } else {
      do {
        c = letters[uniform_index(rng, letters.size())];
      } while (!w.empty() && c == w.back());
    }
    w.push_back(c);
  }
  return w;
}

// Slow contour in roughly [-1, 1].
struct Contour {
  double f1, f2, p1, p2;
  static Contour draw(Rng& rng) {
    return {uniform(rng, 0.5, 1.8), uniform(rng, 2.0, 4.0), uniform(rng, 0.0, kTwoPi),
            uniform(rng, 0.0, kTwoPi)};
  }
  double at(double seconds) const {
    return 0.7 * std::sin(kTwoPi * f1 * seconds + p1) + 0.3 * std::sin(kTwoPi * f2 * seconds + p2);
  }
};

struct MixingNet {
  Matrix input;  // [D x F]
  Vector input_bias;
  std::vector<Matrix> blocks;
  std::vector<Vector> block_bias;

  Vector apply(const Vector& f) const {
    Vector u = input * f + input_bias;
    for (std::size_t k = 0; k < blocks.size(); ++k)
      u += (blocks[k] * u + block_bias[k]).array().tanh().matrix();
    return u;
  }
};

struct FeatureLayout {
  int sym = 0, spk = 0, emo = 0;
  int total() const { return sym + spk + 2 + emo; }
};

}  // namespace

void SynthConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("synth: " + msg);
  };
  need(vocab_size >= 2 && vocab_size <= 27, "vocab_size must be in [2, 27]");
  need(speaker_count >= 2, "speaker_count must be at least 2");
  need(emotion_count >= 2, "emotion_count must be at least 2");
  need(utterance_count >= 2, "utterance_count must be at least 2");
  need(noise_scale >= 0.0, "noise_scale must be nonnegative");
  need(frames_per_symbol_min >= 1 && frames_per_symbol_max >= frames_per_symbol_min,
       "invalid frames_per_symbol range");
  need(width >= 1 || one_hot, "width must be positive");
  need(layer_count >= 1, "layer_count must be positive");
  need(mixing_depth >= 0, "mixing_depth must be nonnegative");
  need(sentence_count >= 2, "sentence_count must be at least 2");
  need(lexicon_size >= 2, "lexicon_size must be at least 2");
  need(words_per_sentence_min >= 1 && words_per_sentence_max >= words_per_sentence_min,
       "invalid words_per_sentence range");
  need(letters_per_word_min >= 1 && letters_per_word_max >= letters_per_word_min,
       "invalid letters_per_word range");
  need(silence_frames_min >= 0 && silence_frames_max >= silence_frames_min,
       "invalid silence_frames range");
  need(frame_rate > 0.0, "frame_rate must be positive");
  need(informative_layer < layer_count, "informative_layer must be < layer_count");
  need(polar_word_count >= 0, "polar_word_count must be nonnegative");
  if (planted_cues) {
    need(vocab_size - 1 >= 4, "planted cues need at least 4 letters");
    need(polar_word_count >= 2, "planted cues need at least two polar words");
  }
}

SynthCorpus synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x5e7));
  NormalSampler normal;

  const int letter_count = cfg.vocab_size - 1;
  const std::string letters(kLetters, kLetters + letter_count);
  SynthCorpus out;
  Corpus& corpus = out.corpus;
  corpus.vocab = Vocabulary::from_letters(letters);
  corpus.source = cfg.one_hot ? "synthetic-onehot" : "synthetic";
  const Vocabulary& vocab = corpus.vocab;
  const int silence = vocab.blank_index();
  const int delimiter = vocab.index_of('|');

  // Lexicon: neutral words plus polar words. In planted mode polar words carry
  // a reserved marker letter that neutral words never use.
  const char positive_marker = letters[static_cast<std::size_t>(letter_count - 2)];
  const char negative_marker = letters[static_cast<std::size_t>(letter_count - 1)];
  const std::string neutral_letters =
      cfg.planted_cues ? letters.substr(0, static_cast<std::size_t>(letter_count - 2)) : letters;
  std::set<std::string> seen;
  std::vector<std::string> neutral_words, positive_words, negative_words;
  auto fresh = [&](const std::string& pool, char marker) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      std::string w = random_word(rng, pool, cfg.letters_per_word_min, cfg.letters_per_word_max, marker);
      if (seen.insert(w).second) return w;
    }
    throw ConfigError("synth: cannot draw enough distinct words; widen letters_per_word range");
  };
  const int polar_count = cfg.polar_word_count;
  const int neutral_count = std::max(2, cfg.lexicon_size - polar_count);
  for (int i = 0; i < neutral_count; ++i) neutral_words.push_back(fresh(neutral_letters, 0));
  for (int i = 0; i < polar_count; ++i) {
    const bool positive = i % 2 == 0;
    const std::string w = cfg.planted_cues ? fresh(neutral_letters, positive ? positive_marker : negative_marker)
                                           : fresh(letters, 0);
    (positive ? positive_words : negative_words).push_back(w);
    out.lexicon.set(w, positive ? uniform(rng, 0.6, 0.95) : -uniform(rng, 0.6, 0.95));
  }

  // Sentence pool.
  std::vector<std::string> sentence_words_pool = neutral_words;
  if (!cfg.planted_cues) {
    sentence_words_pool.insert(sentence_words_pool.end(), positive_words.begin(), positive_words.end());
    sentence_words_pool.insert(sentence_words_pool.end(), negative_words.begin(), negative_words.end());
  }
  std::set<std::string> seen_sentences;
  for (int attempt = 0; static_cast<int>(out.sentences.size()) < cfg.sentence_count; ++attempt) {
    if (attempt > 100000) throw ConfigError("synth: cannot draw enough distinct sentences");
    const int n = uniform_int(rng, cfg.words_per_sentence_min, cfg.words_per_sentence_max);
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s.push_back(' ');
      s += sentence_words_pool[uniform_index(rng, sentence_words_pool.size())];
    }
    if (seen_sentences.insert(s).second) out.sentences.push_back(s);
  }

  // Speakers.
  struct Speaker {
    int gender;
    double base_pitch;
    double base_intensity;
    Vector embedding;
  };
  std::vector<Speaker> speakers;
  const int spk_dim = 8, emo_dim = 6;
  for (int s = 0; s < cfg.speaker_count; ++s) {
    Speaker sp;
    sp.gender = s % 2;
    sp.base_pitch = sp.gender == 0 ? uniform(rng, 100.0, 140.0) : uniform(rng, 180.0, 240.0);
    sp.base_intensity = uniform(rng, 55.0, 65.0);
    sp.embedding = gaussian_matrix(spk_dim, 1, 1.0, rng).col(0);
    speakers.push_back(std::move(sp));
  }

  // Emotions.
  std::vector<EmotionProfile> profiles;
  std::vector<Vector> emotion_embeddings;
  for (int e = 0; e < cfg.emotion_count; ++e) {
    if (e < 4) {
      profiles.push_back(kBaseProfiles[e]);
    } else {
      profiles.push_back({uniform(rng, 0.85, 1.25), uniform(rng, 0.03, 0.2), uniform(rng, -5, 6),
                          uniform(rng, 0.8, 4.0), uniform(rng, -0.3, 0.4), uniform(rng, -9, 9),
                          static_cast<int>(uniform_index(rng, 3)) - 1});
    }
    emotion_embeddings.push_back(gaussian_matrix(emo_dim, 1, 1.0, rng).col(0));
  }

  // Symbol embeddings; the blank row doubles as silence.
  FeatureLayout layout;
  layout.sym = cfg.one_hot ? vocab.size() : vocab.size() + 2;
  layout.spk = spk_dim;
  layout.emo = emo_dim;
  const Matrix symbol_embedding = gaussian_matrix(vocab.size(), layout.sym, 1.0, rng);

  // Per-layer factor gains and mixing networks.
  const int layers = cfg.one_hot ? 1 : cfg.layer_count;
  const int width = cfg.one_hot ? vocab.size() : cfg.width;
  std::vector<MixingNet> nets;
  std::vector<std::array<double, 3>> gains;  // symbol, speaker, prosody/emotion
  for (int l = 0; l < layers; ++l) {
    const double p = layers > 1 ? static_cast<double>(l) / (layers - 1) : 0.5;
    double g_sym = 0.6 + 0.6 * p;
    if (cfg.informative_layer >= 0) g_sym = l == cfg.informative_layer ? 1.2 : 0.0;
    gains.push_back({g_sym, 1.2 - 0.5 * p, 1.1 - 0.4 * p});
    MixingNet net;
    const int f = layout.total();
    net.input = gaussian_matrix(width, f, 1.5 / std::sqrt(static_cast<double>(f)), rng);
    net.input_bias = gaussian_matrix(width, 1, 0.1, rng).col(0);
    for (int k = 0; k < cfg.mixing_depth; ++k) {
      net.blocks.push_back(gaussian_matrix(width, width, 1.5 / std::sqrt(static_cast<double>(width)), rng));
      net.block_bias.push_back(gaussian_matrix(width, 1, 0.1, rng).col(0));
    }
    nets.push_back(std::move(net));
  }

  char id_buf[32];
  for (int u = 0; u < cfg.utterance_count; ++u) {
    const std::size_t sentence = uniform_index(rng, out.sentences.size());
    const int spk = static_cast<int>(uniform_index(rng, speakers.size()));
    const int emo = static_cast<int>(uniform_index(rng, profiles.size()));
    const EmotionProfile& prof = profiles[static_cast<std::size_t>(emo)];
    std::vector<std::string> words = split_words(out.sentences[sentence]);
    if (cfg.planted_cues && prof.polarity_sign != 0) {
      const auto& pool = prof.polarity_sign > 0 ? positive_words : negative_words;
      const std::string& polar = pool[uniform_index(rng, pool.size())];
      const auto pos = uniform_index(rng, words.size() + 1);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), polar);
    }

    // Symbol-level frame layout.
    std::vector<int> frame_symbol;
    std::vector<WordTiming> timings;
    const auto push_frames = [&](int symbol, int n) {
      for (int i = 0; i < n; ++i) frame_symbol.push_back(symbol);
    };
    push_frames(silence, uniform_int(rng, cfg.silence_frames_min, cfg.silence_frames_max));
    std::string transcript;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) {
        transcript.push_back(' ');
        push_frames(delimiter, uniform_int(rng, cfg.frames_per_symbol_min, cfg.frames_per_symbol_max));
      }
      const int first = static_cast<int>(frame_symbol.size());
      for (char c : words[w])
        push_frames(vocab.index_of(c), uniform_int(rng, cfg.frames_per_symbol_min, cfg.frames_per_symbol_max));
      const int last = static_cast<int>(frame_symbol.size());
      timings.push_back({words[w], first / cfg.frame_rate, last / cfg.frame_rate});
      transcript += words[w];
    }
    push_frames(silence, uniform_int(rng, cfg.silence_frames_min, cfg.silence_frames_max));
    const int frames = static_cast<int>(frame_symbol.size());

    // Prosody.
    const Speaker& sp = speakers[static_cast<std::size_t>(spk)];
    const Contour pc = Contour::draw(rng), ic = Contour::draw(rng);
    const double pitch_factor = cfg.planted_cues ? 1.0 : prof.pitch_factor;
    const double pitch_var = cfg.planted_cues ? 0.05 : prof.pitch_var;
    const double int_offset = cfg.planted_cues ? 0.0 : prof.intensity_offset;
    const double int_var = cfg.planted_cues ? 1.0 : prof.intensity_var;
    std::vector<double> bump(static_cast<std::size_t>(frames), 0.0);
    if (cfg.planted_cues) {
      std::vector<int> voiced;
      for (int t = 0; t < frames; ++t)
        if (frame_symbol[static_cast<std::size_t>(t)] != silence &&
            frame_symbol[static_cast<std::size_t>(t)] != delimiter)
          voiced.push_back(t);
      shuffle_in_place(voiced, rng);
      const int centers[2] = {voiced[0], voiced.size() > 1 ? voiced[1] : voiced[0]};
      for (int t = 0; t < frames; ++t) {
        double b = 0.0;
        for (int c : centers) b += std::exp(-0.5 * std::pow((t - c) / 0.8, 2));
        bump[static_cast<std::size_t>(t)] = std::min(1.0, b);
      }
    }
    std::vector<double> pitch(static_cast<std::size_t>(frames)), intensity(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const int sym = frame_symbol[ti];
      const double sec = t / cfg.frame_rate;
      const bool voiced = sym != silence && sym != delimiter;
      double p = 0.0, in = 0.0;
      if (voiced) {
        p = sp.base_pitch * pitch_factor * (1.0 + pitch_var * pc.at(sec));
        in = sp.base_intensity + int_offset + int_var * ic.at(sec);
        if (cfg.planted_cues) {
          p *= 1.0 + prof.bump_pitch * bump[ti];
          in += prof.bump_intensity * bump[ti];
        }
      } else if (sym == delimiter) {
        in = sp.base_intensity - 12.0 + 0.5 * ic.at(sec);
      } else {
        in = sp.base_intensity - 30.0 + 0.5 * ic.at(sec);
      }
      pitch[ti] = p;
      intensity[ti] = in;
    }

    // Frame features -> mixed hidden states.
    auto tensor = std::make_shared<HiddenStateTensor>(static_cast<std::uint32_t>(layers),
                                                      static_cast<std::uint32_t>(frames),
                                                      static_cast<std::uint32_t>(width));
    for (int t = 0; t < frames; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const int sym = frame_symbol[ti];
      if (cfg.one_hot) {
        for (int j = 0; j < width; ++j) {
          const double v = (j == sym ? 1.0 : 0.0) + cfg.noise_scale * normal(rng);
          tensor->at(0, static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(j)) = static_cast<float>(v);
        }
        continue;
      }
      const double pitch_feat = pitch[ti] > 0.0 ? (std::log(pitch[ti]) - std::log(160.0)) / 0.35 : 0.0;
      const double int_feat = (intensity[ti] - 60.0) / 8.0;
      const double emo_profile = cfg.planted_cues ? bump[ti] : 1.0;
      for (int l = 0; l < layers; ++l) {
        const auto& g = gains[static_cast<std::size_t>(l)];
        Vector f(layout.total());
        f.segment(0, layout.sym) = cfg.symbol_gain * g[0] * symbol_embedding.row(sym).transpose();
        f.segment(layout.sym, layout.spk) = cfg.speaker_gain * g[1] * sp.embedding;
        f(layout.sym + layout.spk) = cfg.prosody_gain * g[2] * pitch_feat;
        f(layout.sym + layout.spk + 1) = cfg.prosody_gain * g[2] * int_feat;
        f.segment(layout.sym + layout.spk + 2, layout.emo) =
            cfg.emotion_gain * g[2] * emo_profile * emotion_embeddings[static_cast<std::size_t>(emo)];
        const Vector h = nets[static_cast<std::size_t>(l)].apply(f);
        for (int j = 0; j < width; ++j) {
          const double v = h(j) + cfg.noise_scale * normal(rng);
          tensor->at(static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(t),
                     static_cast<std::uint32_t>(j)) = static_cast<float>(v);
        }
      }
    }

    UtteranceRecord r;
    std::snprintf(id_buf, sizeof(id_buf), "utt%05d", u);
    r.id = id_buf;
    r.transcript = transcript;
    r.labels.emotion = emo;
    r.labels.speaker = spk;
    r.labels.gender = sp.gender;
    r.pitch = std::move(pitch);
    r.intensity = std::move(intensity);
    r.word_timings = std::move(timings);
    r.duration = frames / cfg.frame_rate;
    r.shape = {tensor->layer_count(), tensor->frame_count(), tensor->width()};
    r.hidden = std::move(tensor);
    validate_record(r, vocab);
    corpus.records.push_back(std::move(r));
  }
  return out;
}

void materialize_synth(const SynthCorpus& synth, const std::filesystem::path& dir) {
  write_corpus(synth.corpus, dir);
  synth.lexicon.save(dir / "lexicon.tsv");
}

double cramers_v(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidInput("cramers_v: need paired samples");
  std::map<int, int> ai, bi;
  for (int v : a) ai.emplace(v, static_cast<int>(ai.size()));
  for (int v : b) bi.emplace(v, static_cast<int>(bi.size()));
  const auto r = static_cast<double>(ai.size()), k = static_cast<double>(bi.size());
  if (ai.size() < 2 || bi.size() < 2) return 0.0;
  Matrix table = Matrix::Zero(static_cast<Eigen::Index>(ai.size()), static_cast<Eigen::Index>(bi.size()));
  for (std::size_t i = 0; i < a.size(); ++i) table(ai[a[i]], bi[b[i]]) += 1.0;
  const double n = static_cast<double>(a.size());
  const Vector rows = table.rowwise().sum(), cols = table.colwise().sum().transpose();
  double chi2 = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
      const double expected = rows(i) * cols(j) / n;
      chi2 += (table(i, j) - expected) * (table(i, j) - expected) / expected;
    }
  const double phi2 = chi2 / n;
  const double phi2c = std::max(0.0, phi2 - (k - 1) * (r - 1) / (n - 1));
  const double rc = r - (r - 1) * (r - 1) / (n - 1);
  const double kc = k - (k - 1) * (k - 1) / (n - 1);
  const double denom = std::min(kc - 1, rc - 1);
  return denom > 0 ? std::sqrt(phi2c / denom) : 0.0;
}

}  // namespace vibsplit
