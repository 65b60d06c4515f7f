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

#include "vibsplit/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "vibsplit/error.hpp"

namespace vibsplit {

namespace {
std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}
}  // namespace

void PolarityLexicon::set(const std::string& word, double polarity) {
  if (polarity < -1.0 || polarity > 1.0)
    throw InvalidInput("lexicon: polarity of '" + word + "' outside [-1, 1]");
  entries_[lower(word)] = polarity;
}

double PolarityLexicon::polarity(const std::string& word) const {
  const auto it = entries_.find(lower(word));
  return it == entries_.end() ? 0.0 : it->second;
}

PolarityLexicon PolarityLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open lexicon " + path.string());
  PolarityLexicon lex;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("lexicon line " + std::to_string(n) + ": expected word<TAB>polarity");
    double value = 0.0;
    std::istringstream num(line.substr(tab + 1));
    if (!(num >> value))
      throw FormatError("lexicon line " + std::to_string(n) + ": polarity is not a number");
    try {
      lex.set(line.substr(0, tab), value);
    } catch (const InvalidInput& e) {
      throw FormatError("lexicon line " + std::to_string(n) + ": " + e.what());
    }
  }
  return lex;
}

void PolarityLexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write lexicon " + path.string());
  for (const auto& [word, value] : entries_) out << word << '\t' << value << '\n';
}

}  // namespace vibsplit
