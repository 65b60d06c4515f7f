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

#include "vibsplit/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string_view>

#include "vibsplit/error.hpp"

namespace vibsplit {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

constexpr char kMagicF32[4] = {'H', 'S', 'T', '1'};
constexpr char kMagicF64[4] = {'H', 'S', 'D', '1'};

void write_header(std::ofstream& out, const char* magic, std::uint32_t l, std::uint32_t t,
                  std::uint32_t d) {
  out.write(magic, 4);
  const std::uint32_t dims[3] = {l, t, d};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
}

std::array<std::uint32_t, 3> read_header(std::ifstream& in, const char* magic,
                                         const std::filesystem::path& path) {
  char got[4] = {};
  in.read(got, 4);
  if (in.gcount() != 4 || std::memcmp(got, magic, 4) != 0)
    throw FormatError(path.string() + ": bad magic (expected " + std::string(magic, 4) + ")");
  std::array<std::uint32_t, 3> dims{};
  in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(dims)))
    throw FormatError(path.string() + ": truncated header");
  return dims;
}

std::uintmax_t expected_size(const std::array<std::uint32_t, 3>& dims, std::size_t elem) {
  return 16 + static_cast<std::uintmax_t>(dims[0]) * dims[1] * dims[2] * elem;
}

void check_size(const std::filesystem::path& path, const std::array<std::uint32_t, 3>& dims,
                std::size_t elem) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw FormatError(path.string() + ": cannot stat file");
  const auto want = expected_size(dims, elem);
  if (size != want)
    throw FormatError(path.string() + ": payload size " + std::to_string(size) +
                      " bytes does not match header shape (" + std::to_string(want) + " bytes)");
}

}  // namespace

HiddenStateTensor::HiddenStateTensor(std::uint32_t layers, std::uint32_t frames, std::uint32_t width,
                                     std::vector<float> values)
    : layers_(layers), frames_(frames), width_(width), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(layers) * frames * width)
    throw InvalidInput("HiddenStateTensor: value count does not match shape");
}

HiddenStateTensor::HiddenStateTensor(std::uint32_t layers, std::uint32_t frames, std::uint32_t width)
    : layers_(layers), frames_(frames), width_(width),
      values_(static_cast<std::size_t>(layers) * frames * width, 0.0f) {}

Matrix HiddenStateTensor::layer(std::uint32_t l) const {
  if (l >= layers_)
    throw InvalidInput("layer index " + std::to_string(l) + " out of range [0, " +
                       std::to_string(layers_) + ")");
  using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajorF> slice(values_.data() + static_cast<std::size_t>(l) * frames_ * width_,
                                    frames_, width_);
  return slice.cast<double>();
}

void HiddenStateTensor::validate() const {
  if (layers_ == 0 || frames_ == 0 || width_ == 0)
    throw FormatError("hidden states: every dimension must be at least 1");
  for (float v : values_)
    if (!std::isfinite(v)) throw FormatError("hidden states: non-finite value");
}

void write_hidden_states(const std::filesystem::path& path, const HiddenStateTensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  write_header(out, kMagicF32, tensor.layer_count(), tensor.frame_count(), tensor.width());
  const auto vals = tensor.values();
  out.write(reinterpret_cast<const char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(float)));
  if (!out) throw FormatError("short write to " + path.string());
}

std::array<std::uint32_t, 3> read_hidden_state_shape(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open hidden-state file " + path.string());
  return read_header(in, kMagicF32, path);
}

HiddenStateTensor read_hidden_states(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open hidden-state file " + path.string());
  const auto dims = read_header(in, kMagicF32, path);
  check_size(path, dims, sizeof(float));
  std::vector<float> values(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(values.size() * sizeof(float)))
    throw FormatError(path.string() + ": truncated payload");
  HiddenStateTensor t(dims[0], dims[1], dims[2], std::move(values));
  t.validate();
  return t;
}

void write_matrix_f64(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  write_header(out, kMagicF64, 1, static_cast<std::uint32_t>(m.rows()),
               static_cast<std::uint32_t>(m.cols()));
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!out) throw FormatError("short write to " + path.string());
}

Matrix read_matrix_f64(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto dims = read_header(in, kMagicF64, path);
  if (dims[0] != 1) throw FormatError(path.string() + ": parameter tensors must have one layer");
  check_size(path, dims, sizeof(double));
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rm(dims[1], dims[2]);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(rm.size() * sizeof(double)))
    throw FormatError(path.string() + ": truncated payload");
  return rm;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = in.gcount();
    if (n <= 0) break;
    h = fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(n)), h);
  }
  return h;
}

}  // namespace vibsplit
