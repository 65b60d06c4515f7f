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

#include <filesystem>
#include <map>
#include <string>

namespace vibsplit {

// Word -> polarity in [-1, 1]; absent words are neutral.
class PolarityLexicon {
 public:
  void set(const std::string& word, double polarity);
  double polarity(const std::string& word) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, double>& entries() const { return entries_; }

  // Plain text, "word<TAB>polarity" per line; '#' starts a comment.
  static PolarityLexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, double> entries_;
};

}  // namespace vibsplit
