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

#pragma once

#include <algorithm>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vibsplit/types.hpp"

namespace vibsplit {

using LabelSequence = std::vector<int>;

// Character inventory for CTC. Index `blank_index` is the blank; every other
// entry is a single-character symbol. The word delimiter symbol (default '|')
// stands for a space in transcripts.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> symbols, int blank_index = 0, char word_delimiter = '|');

  // Blank followed by `letters`, then the word delimiter.
  static Vocabulary from_letters(std::string_view letters, char word_delimiter = '|');

  // Plain text, one symbol per line, blank first.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(symbols_.size()); }
  int blank_index() const { return blank_; }
  char word_delimiter() const { return delimiter_; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  // -1 when absent. Spaces map to the word delimiter.
  int index_of(char c) const;
  bool contains(char c) const { return index_of(c) >= 0; }

  // Throws InvalidInput naming the first out-of-vocabulary symbol.
  LabelSequence encode(std::string_view transcript) const;
  // Delimiter symbols become spaces.
  std::string decode(std::span<const int> labels) const;

 private:
  std::vector<std::string> symbols_;
  int blank_ = 0;
  char delimiter_ = '|';
  std::vector<int> lookup_ = std::vector<int>(256, -1);
};

// Minimum number of frames needed to emit `target`: its length plus one blank
// for every adjacent repeated pair.
int ctc_required_frames(std::span<const int> target);

struct CtcResult {
  double loss = 0.0;
  Matrix grad;  // dL/dlogprobs, [frames x C]
};

// Negative log-likelihood of `target` under per-frame log-probabilities
// [frames x C], via the log-space forward recursion over the blank-interleaved
// target. Returns +inf for targets that cannot fit in the available frames.
// Throws InvalidInput if the target contains the blank.
double ctc_loss(const Matrix& logprobs, std::span<const int> target, int blank);

// Loss plus gradient with respect to the log-probabilities (forward-backward).
// For infeasible targets the loss is +inf and the gradient is zero.
CtcResult ctc_loss_and_grad(const Matrix& logprobs, std::span<const int> target, int blank);

// Exhaustive path enumeration; refuses instances with more than 6 frames or
// more than 4 classes.
double brute_force_ctc(const Matrix& logprobs, std::span<const int> target, int blank);

// Collapse repeats, then drop blanks.
LabelSequence ctc_collapse(std::span<const int> path, int blank);

// Best-path decoding: per-frame argmax followed by ctc_collapse.
LabelSequence greedy_decode(const Matrix& logprobs, int blank);
std::string greedy_decode(const Matrix& logprobs, const Vocabulary& vocab);

template <typename T>
std::size_t edit_distance(std::span<const T> a, std::span<const T> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> split_words(std::string_view text);

// Word-level Levenshtein distance divided by the reference length.
double wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);
double wer(std::string_view reference, std::string_view hypothesis);
// Character-level analogue (spaces count as characters).
double cer(std::string_view reference, std::string_view hypothesis);

// Corpus-level rates: total edits over total reference length.
struct ErrorCounts {
  std::size_t word_edits = 0, words = 0, char_edits = 0, chars = 0;
  void add(std::string_view reference, std::string_view hypothesis);
  double wer() const;
  double cer() const;
};

}  // namespace vibsplit
