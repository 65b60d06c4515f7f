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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vibsplit/data.hpp"

namespace vibsplit {

struct FrameSeries {
  std::string name;   // "pitch" or "intensity"
  std::string units;  // "Hz" or "dB"
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

// Frame t is centred on sample t*hop + hop/2 and spans frame_length samples
// (truncated at the edges). Without `frame_count` the grid covers the
// waveform: ceil(N / hop) frames. Energy is Hann-weighted, reported in dB.
FrameSeries rms_intensity(std::span<const float> samples, std::size_t frame_length,
                          std::size_t hop, std::optional<std::size_t> frame_count = std::nullopt,
                          double floor_db = -100.0);

struct PitchOptions {
  double f0_min = 75.0;
  double f0_max = 500.0;
  double voicing_threshold = 0.5;  // normalised autocorrelation peak
  // Analysis window in samples; 0 means three periods of f0_min.
  std::size_t window = 0;
};

// Normalised-autocorrelation F0 per frame on the same grid as rms_intensity;
// 0 marks unvoiced frames.
FrameSeries autocorr_pitch(std::span<const float> samples, double sample_rate, std::size_t hop,
                           const PitchOptions& options = {},
                           std::optional<std::size_t> frame_count = std::nullopt);

struct AlignedWord {
  std::string word;
  int f_start = 0;
  int f_end = 0;

  bool operator==(const AlignedWord&) const = default;
};

// f = ceil(t / total_time * frames) for both boundaries; a start of 0 maps to
// frame 0.
int time_to_frame(double t, double total_time, int frames);
std::vector<AlignedWord> align_words_to_frames(std::span<const WordTiming> timings,
                                               double total_time, int frames);

// Headerless little-endian float32 PCM.
std::vector<float> read_waveform(const std::filesystem::path& path);
void write_waveform(const std::filesystem::path& path, std::span<const float> samples);

// Fills missing pitch/intensity series from the record's waveform, on the
// hidden-state frame grid. Returns false when there is nothing to extract from.
bool extract_frame_series(UtteranceRecord& record, const PitchOptions& options = {});

}  // namespace vibsplit
