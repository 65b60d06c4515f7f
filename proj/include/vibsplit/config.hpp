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
#include <optional>
#include <string>

#include "vibsplit/attribution.hpp"
#include "vibsplit/layerwise.hpp"
#include "vibsplit/synth.hpp"

namespace vibsplit {

// Flat view of a TOML-style file: `[section]` headers, `key = value` lines,
// '#' comments. Values are bare numbers/booleans or double-quoted strings.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, const std::string& origin = "<config>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

 private:
  std::map<std::string, std::string> values_;  // "section.key" -> unquoted value
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::optional<int> layer;  // nullopt: weighted layer average
  bool sweep = false;
  int workers = 1;

  std::filesystem::path manifest;  // empty: synthesize
  std::filesystem::path vocab;
  SynthConfig synth;

  Stage1Config stage1;
  Stage2Config stage2;
  ProbeConfig probe;
  Task probe_task = Task::Emotion;

  std::filesystem::path lexicon;
  ExtremaOptions extrema;
  int ig_steps = 64;
  int max_records = 0;  // attribution records from the test split; 0 = all

  // Unknown keys and malformed values raise ConfigError.
  static RunConfig from(const KeyValueFile& file);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_toml() const;

  // Seeds and layer mode pushed into the per-stage configs.
  Stage1Config stage1_config() const;
  Stage2Config stage2_config() const;
  ProbeConfig probe_config() const;
  LayerwiseConfig layerwise_config() const;
};

}  // namespace vibsplit
