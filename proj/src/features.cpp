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

#include "vibsplit/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "vibsplit/error.hpp"

namespace vibsplit {

namespace {

struct Window {
  std::size_t begin = 0, end = 0;
};

Window frame_window(std::size_t t, std::size_t hop, std::size_t length, std::size_t n) {
  const long centre = static_cast<long>(t * hop + hop / 2);
  const long half = static_cast<long>(length / 2);
  const long b = std::max(0L, centre - half);
  const long e = std::min(static_cast<long>(n), centre - half + static_cast<long>(length));
  if (e <= b) return {0, 0};
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
}

std::size_t grid_size(std::size_t n, std::size_t hop, std::optional<std::size_t> frame_count) {
  return frame_count ? *frame_count : (n + hop - 1) / hop;
}

}  // namespace

FrameSeries rms_intensity(std::span<const float> samples, std::size_t frame_length,
                          std::size_t hop, std::optional<std::size_t> frame_count,
                          double floor_db) {
  if (samples.empty()) throw InvalidInput("rms_intensity: empty waveform");
  if (hop == 0) throw InvalidInput("rms_intensity: hop must be positive");
  if (frame_length < hop) throw InvalidInput("rms_intensity: frame length shorter than hop");
  FrameSeries out{"intensity", "dB", {}};
  const std::size_t frames = grid_size(samples.size(), hop, frame_count);
  out.values.resize(frames, floor_db);
  for (std::size_t t = 0; t < frames; ++t) {
    const Window w = frame_window(t, hop, frame_length, samples.size());
    if (w.end == w.begin) continue;
    // Hann-weighted mean square; the taper suppresses ripple from partial periods.
    const double start = static_cast<double>(t * hop + hop / 2) - static_cast<double>(frame_length / 2);
    double energy = 0.0, weight = 0.0;
    for (std::size_t i = w.begin; i < w.end; ++i) {
      const double phase = (static_cast<double>(i) - start + 0.5) / static_cast<double>(frame_length);
      const double h = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * phase);
      energy += h * double(samples[i]) * samples[i];
      weight += h;
    }
    if (weight <= 0.0) continue;
    const double rms = std::sqrt(energy / weight);
    if (rms > 0.0) out.values[t] = std::max(floor_db, 20.0 * std::log10(rms));
  }
  return out;
}

FrameSeries autocorr_pitch(std::span<const float> samples, double sample_rate, std::size_t hop,
                           const PitchOptions& options, std::optional<std::size_t> frame_count) {
  if (samples.empty()) throw InvalidInput("autocorr_pitch: empty waveform");
  if (!(sample_rate > 0.0)) throw InvalidInput("autocorr_pitch: sample rate must be positive");
  if (hop == 0) throw InvalidInput("autocorr_pitch: hop must be positive");
  if (!(options.f0_min > 0.0) || !(options.f0_max > options.f0_min) ||
      options.f0_max > sample_rate / 2.0)
    throw InvalidInput("autocorr_pitch: f0 band [" + std::to_string(options.f0_min) + ", " +
                       std::to_string(options.f0_max) + "] is invalid for sample rate " +
                       std::to_string(sample_rate));
  const auto lag_min = static_cast<std::size_t>(std::floor(sample_rate / options.f0_max));
  const auto lag_max = static_cast<std::size_t>(std::ceil(sample_rate / options.f0_min));
  const std::size_t window =
      options.window ? options.window : static_cast<std::size_t>(3 * lag_max);
  if (window <= lag_max + 1)
    throw InvalidInput("autocorr_pitch: analysis window shorter than the longest period");

  FrameSeries out{"pitch", "Hz", {}};
  const std::size_t frames = grid_size(samples.size(), hop, frame_count);
  out.values.assign(frames, 0.0);
  std::vector<double> x;
  std::vector<double> r(lag_max + 2, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const Window w = frame_window(t, hop, window, samples.size());
    const std::size_t n = w.end - w.begin;
    if (n <= lag_max + 1) continue;
    x.assign(samples.begin() + static_cast<long>(w.begin), samples.begin() + static_cast<long>(w.end));
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    for (double& v : x) v -= mean;

    double best = -1.0;
    for (std::size_t lag = lag_min; lag <= lag_max + 1; ++lag) {
      double xy = 0.0, xx = 0.0, yy = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) {
        xy += x[i] * x[i + lag];
        xx += x[i] * x[i];
        yy += x[i + lag] * x[i + lag];
      }
      r[lag] = (xx > 0.0 && yy > 0.0) ? xy / std::sqrt(xx * yy) : 0.0;
      if (lag <= lag_max) best = std::max(best, r[lag]);
    }
    if (best < options.voicing_threshold) continue;

    // Smallest-lag local maximum close to the global one guards against
    // picking a multiple of the period.
    std::size_t pick = 0;
    for (std::size_t lag = std::max<std::size_t>(lag_min, 1); lag <= lag_max; ++lag) {
      const bool local = r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1];
      if (local && r[lag] >= 0.9 * best) {
        pick = lag;
        break;
      }
    }
    if (pick == 0) continue;
    double refined = static_cast<double>(pick);
    const double a = r[pick - 1], b = r[pick], c = r[pick + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) refined += 0.5 * (a - c) / denom;
    out.values[t] = sample_rate / refined;
  }
  return out;
}

int time_to_frame(double t, double total_time, int frames) {
  // The small slack keeps exact products such as 0.25 * 8 from rounding up.
  const double f = std::ceil(t / total_time * static_cast<double>(frames) - 1e-9);
  return std::clamp(static_cast<int>(f), 0, frames);
}

std::vector<AlignedWord> align_words_to_frames(std::span<const WordTiming> timings,
                                               double total_time, int frames) {
  if (!(total_time > 0.0)) throw InvalidInput("align_words_to_frames: total time must be positive");
  if (frames < 1) throw InvalidInput("align_words_to_frames: frame count must be positive");
  std::vector<AlignedWord> out;
  out.reserve(timings.size());
  for (const auto& w : timings) {
    if (!(w.start >= 0.0) || !(w.end <= total_time) || !(w.start < w.end))
      throw InvalidInput("align_words_to_frames: timing of '" + w.word + "' [" +
                         std::to_string(w.start) + ", " + std::to_string(w.end) +
                         "] is outside [0, " + std::to_string(total_time) + "]");
    out.push_back({w.word, time_to_frame(w.start, total_time, frames),
                   time_to_frame(w.end, total_time, frames)});
  }
  return out;
}

std::vector<float> read_waveform(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("waveform: cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 4 != 0) throw FormatError("waveform: " + path.string() + " is not float32 PCM");
  std::vector<char> raw(bytes);
  in.seekg(0);
  in.read(raw.data(), static_cast<std::streamsize>(bytes));
  std::vector<float> out(bytes / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 3; b >= 0; --b) u = (u << 8) | static_cast<unsigned char>(raw[i * 4 + b]);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

void write_waveform(const std::filesystem::path& path, std::span<const float> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("waveform: cannot write " + path.string());
  for (float f : samples) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                       static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
    out.write(b, 4);
  }
}

bool extract_frame_series(UtteranceRecord& record, const PitchOptions& options) {
  if (record.pitch && record.intensity) return true;
  if (!record.waveform) return false;
  const std::vector<float> samples = read_waveform(record.waveform->path);
  const std::size_t frames = record.frame_count();
  if (frames == 0) return false;
  const double rate = record.waveform->sample_rate;
  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(samples.size()) / frames)));
  if (!record.intensity)
    record.intensity = rms_intensity(samples, 2 * hop, hop, frames).values;
  if (!record.pitch) record.pitch = autocorr_pitch(samples, rate, hop, options, frames).values;
  return true;
}

}  // namespace vibsplit
