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

#include "vibsplit/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "vibsplit/error.hpp"

namespace vibsplit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void validate_target(const Matrix& logprobs, std::span<const int> target, int blank) {
  const auto classes = logprobs.cols();
  if (blank < 0 || blank >= classes) throw InvalidInput("ctc: blank index out of range");
  for (int s : target) {
    if (s == blank) throw InvalidInput("ctc: target contains the blank symbol");
    if (s < 0 || s >= classes)
      throw InvalidInput("ctc: target symbol " + std::to_string(s) + " out of range");
  }
}

// Blank-interleaved target: b, l1, b, l2, ..., lU, b.
std::vector<int> extend(std::span<const int> target, int blank) {
  std::vector<int> ext(2 * target.size() + 1, blank);
  for (std::size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = target[u];
  return ext;
}

// alpha[t][s]: log prob of emitting ext[0..s] through frame t ending in s.
Matrix forward_lattice(const Matrix& lp, const std::vector<int>& ext) {
  const Eigen::Index frames = lp.rows();
  const Eigen::Index states = static_cast<Eigen::Index>(ext.size());
  Matrix alpha = Matrix::Constant(frames, states, kNegInf);
  alpha(0, 0) = lp(0, ext[0]);
  if (states > 1) alpha(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < frames; ++t) {
    for (Eigen::Index s = 0; s < states; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (s >= 2 && ext[s] != ext[0] && ext[s] != ext[s - 2])
        acc = log_add(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, ext[s]);
    }
  }
  return alpha;
}

// beta[t][s]: log prob of emitting ext[s..] from frame t on, starting in s
// (includes the emission at t).
Matrix backward_lattice(const Matrix& lp, const std::vector<int>& ext) {
  const Eigen::Index frames = lp.rows();
  const Eigen::Index states = static_cast<Eigen::Index>(ext.size());
  Matrix beta = Matrix::Constant(frames, states, kNegInf);
  beta(frames - 1, states - 1) = lp(frames - 1, ext[states - 1]);
  if (states > 1) beta(frames - 1, states - 2) = lp(frames - 1, ext[states - 2]);
  for (Eigen::Index t = frames - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < states; ++s) {
      double acc = beta(t + 1, s);
      if (s + 1 < states) acc = log_add(acc, beta(t + 1, s + 1));
      if (s + 2 < states && ext[s] != ext[0] && ext[s] != ext[s + 2])
        acc = log_add(acc, beta(t + 1, s + 2));
      beta(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, ext[s]);
    }
  }
  return beta;
}

double total_log_prob(const Matrix& alpha) {
  const Eigen::Index last = alpha.rows() - 1;
  const Eigen::Index states = alpha.cols();
  double z = alpha(last, states - 1);
  if (states > 1) z = log_add(z, alpha(last, states - 2));
  return z;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> symbols, int blank_index, char word_delimiter)
    : symbols_(std::move(symbols)), blank_(blank_index), delimiter_(word_delimiter) {
  if (blank_ < 0 || blank_ >= static_cast<int>(symbols_.size()))
    throw InvalidInput("vocabulary: blank index out of range");
  for (int i = 0; i < static_cast<int>(symbols_.size()); ++i) {
    if (i == blank_) continue;
    const std::string& s = symbols_[i];
    if (s.size() != 1) throw InvalidInput("vocabulary: symbol '" + s + "' is not one character");
    auto& slot = lookup_[static_cast<unsigned char>(s[0])];
    if (slot >= 0) throw InvalidInput("vocabulary: duplicate symbol '" + s + "'");
    slot = i;
  }
}

Vocabulary Vocabulary::from_letters(std::string_view letters, char word_delimiter) {
  std::vector<std::string> symbols{"<blank>"};
  for (char c : letters) symbols.emplace_back(1, c);
  symbols.emplace_back(1, word_delimiter);
  return Vocabulary(std::move(symbols), 0, word_delimiter);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("vocabulary: cannot open " + path.string());
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    symbols.push_back(line);
  }
  if (symbols.size() < 2) throw FormatError("vocabulary: " + path.string() + " has fewer than two entries");
  try {
    return Vocabulary(std::move(symbols), 0);
  } catch (const InvalidInput& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("vocabulary: cannot write " + path.string());
  out << symbols_[blank_] << '\n';
  for (int i = 0; i < size(); ++i)
    if (i != blank_) out << symbols_[i] << '\n';
}

int Vocabulary::index_of(char c) const {
  if (c == ' ') c = delimiter_;
  return lookup_[static_cast<unsigned char>(c)];
}

LabelSequence Vocabulary::encode(std::string_view transcript) const {
  LabelSequence out;
  out.reserve(transcript.size());
  for (char c : transcript) {
    const int idx = index_of(c);
    if (idx < 0)
      throw InvalidInput(std::string("transcript symbol '") + c + "' is not in the vocabulary");
    out.push_back(idx);
  }
  return out;
}

std::string Vocabulary::decode(std::span<const int> labels) const {
  std::string out;
  for (int l : labels) {
    if (l == blank_ || l < 0 || l >= size()) continue;
    const char c = symbols_[l][0];
    out.push_back(c == delimiter_ ? ' ' : c);
  }
  return out;
}

int ctc_required_frames(std::span<const int> target) {
  int need = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

double ctc_loss(const Matrix& logprobs, std::span<const int> target, int blank) {
  validate_target(logprobs, target, blank);
  if (logprobs.rows() < ctc_required_frames(target) || logprobs.rows() == 0)
    return std::numeric_limits<double>::infinity();
  const auto ext = extend(target, blank);
  return -total_log_prob(forward_lattice(logprobs, ext));
}

CtcResult ctc_loss_and_grad(const Matrix& logprobs, std::span<const int> target, int blank) {
  validate_target(logprobs, target, blank);
  CtcResult res;
  res.grad = Matrix::Zero(logprobs.rows(), logprobs.cols());
  if (logprobs.rows() < ctc_required_frames(target) || logprobs.rows() == 0) {
    res.loss = std::numeric_limits<double>::infinity();
    return res;
  }
  const auto ext = extend(target, blank);
  const Matrix alpha = forward_lattice(logprobs, ext);
  const Matrix beta = backward_lattice(logprobs, ext);
  const double log_z = total_log_prob(alpha);
  res.loss = -log_z;
  // dL/dlp(t,k) = -sum_{s: ext[s]=k} P(paths through (t,s)) / P(target)
  for (Eigen::Index t = 0; t < logprobs.rows(); ++t) {
    for (std::size_t s = 0; s < ext.size(); ++s) {
      const double a = alpha(t, static_cast<Eigen::Index>(s));
      const double b = beta(t, static_cast<Eigen::Index>(s));
      if (a == kNegInf || b == kNegInf) continue;
      res.grad(t, ext[s]) -= std::exp(a + b - logprobs(t, ext[s]) - log_z);
    }
  }
  return res;
}

double brute_force_ctc(const Matrix& logprobs, std::span<const int> target, int blank) {
  validate_target(logprobs, target, blank);
  const Eigen::Index frames = logprobs.rows();
  const Eigen::Index classes = logprobs.cols();
  if (frames > 6 || classes > 4)
    throw InvalidInput("brute_force_ctc: instance exceeds the enumeration bound (frames <= 6, C <= 4)");
  if (frames == 0) return std::numeric_limits<double>::infinity();
  std::vector<int> path(static_cast<std::size_t>(frames), 0);
  double log_total = kNegInf;
  const std::vector<int> want(target.begin(), target.end());
  while (true) {
    if (ctc_collapse(path, blank) == want) {
      double lp = 0.0;
      for (Eigen::Index t = 0; t < frames; ++t) lp += logprobs(t, path[static_cast<std::size_t>(t)]);
      log_total = log_add(log_total, lp);
    }
    // odometer increment
    std::size_t i = 0;
    while (i < path.size() && ++path[i] == classes) path[i++] = 0;
    if (i == path.size()) break;
  }
  return -log_total;
}

LabelSequence ctc_collapse(std::span<const int> path, int blank) {
  LabelSequence out;
  int prev = -1;
  for (int p : path) {
    if (p != prev && p != blank) out.push_back(p);
    prev = p;
  }
  return out;
}

LabelSequence greedy_decode(const Matrix& logprobs, int blank) {
  std::vector<int> path(static_cast<std::size_t>(logprobs.rows()));
  for (Eigen::Index t = 0; t < logprobs.rows(); ++t) {
    Eigen::Index best = 0;
    logprobs.row(t).maxCoeff(&best);
    path[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return ctc_collapse(path, blank);
}

std::string greedy_decode(const Matrix& logprobs, const Vocabulary& vocab) {
  return vocab.decode(greedy_decode(logprobs, vocab.blank_index()));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '|') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

double wer(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (reference.empty()) throw InvalidInput("wer: empty reference");
  return static_cast<double>(edit_distance(reference, hypothesis)) /
         static_cast<double>(reference.size());
}

double wer(std::string_view reference, std::string_view hypothesis) {
  const auto ref = split_words(reference);
  const auto hyp = split_words(hypothesis);
  return wer(std::span<const std::string>(ref), std::span<const std::string>(hyp));
}

double cer(std::string_view reference, std::string_view hypothesis) {
  if (reference.empty()) throw InvalidInput("cer: empty reference");
  return static_cast<double>(edit_distance(std::span<const char>(reference.data(), reference.size()),
                                           std::span<const char>(hypothesis.data(), hypothesis.size()))) /
         static_cast<double>(reference.size());
}

void ErrorCounts::add(std::string_view reference, std::string_view hypothesis) {
  const auto ref = split_words(reference);
  const auto hyp = split_words(hypothesis);
  word_edits += edit_distance(std::span<const std::string>(ref), std::span<const std::string>(hyp));
  words += ref.size();
  char_edits += edit_distance(std::span<const char>(reference.data(), reference.size()),
                              std::span<const char>(hypothesis.data(), hypothesis.size()));
  chars += reference.size();
}

double ErrorCounts::wer() const {
  if (words == 0) throw InvalidInput("wer: empty reference");
  return static_cast<double>(word_edits) / static_cast<double>(words);
}

double ErrorCounts::cer() const {
  if (chars == 0) throw InvalidInput("cer: empty reference");
  return static_cast<double>(char_edits) / static_cast<double>(chars);
}

}  // namespace vibsplit
