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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vibsplit/types.hpp"

namespace vibsplit {

// Frozen upstream representations, [layers x frames x width], stored as float32
// layer-major then frame-major exactly as in the on-disk container.
class HiddenStateTensor {
 public:
  HiddenStateTensor() = default;
  HiddenStateTensor(std::uint32_t layers, std::uint32_t frames, std::uint32_t width,
                    std::vector<float> values);
  HiddenStateTensor(std::uint32_t layers, std::uint32_t frames, std::uint32_t width);

  std::uint32_t layer_count() const { return layers_; }
  std::uint32_t frame_count() const { return frames_; }
  std::uint32_t width() const { return width_; }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  float at(std::uint32_t l, std::uint32_t t, std::uint32_t j) const {
    return values_[(static_cast<std::size_t>(l) * frames_ + t) * width_ + j];
  }
  float& at(std::uint32_t l, std::uint32_t t, std::uint32_t j) {
    return values_[(static_cast<std::size_t>(l) * frames_ + t) * width_ + j];
  }

  // [frames x width] slice for one layer, widened to double.
  Matrix layer(std::uint32_t l) const;

  // Throws FormatError on NaN/Inf or empty dimensions.
  void validate() const;

  bool operator==(const HiddenStateTensor&) const = default;

 private:
  std::uint32_t layers_ = 0, frames_ = 0, width_ = 0;
  std::vector<float> values_;
};

// "HST1" container: magic, three little-endian u32 (L, T, D), then L*T*D
// little-endian float32 values.
void write_hidden_states(const std::filesystem::path& path, const HiddenStateTensor& tensor);
HiddenStateTensor read_hidden_states(const std::filesystem::path& path);
// Header only; used to validate manifests without reading payloads.
std::array<std::uint32_t, 3> read_hidden_state_shape(const std::filesystem::path& path);

// "HSD1" container: identical layout with float64 payload. Checkpoints use it
// so trained parameters survive a save/load cycle bit-exactly.
void write_matrix_f64(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_f64(const std::filesystem::path& path);

// Checksum of a file's bytes (FNV-1a), streamed in chunks.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace vibsplit
