// Copyright 2026 The SampleRNN-TTS Authors
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

// Minimal versioned binary container: an 8-byte magic, a u32 version, then a
// stream of little-endian scalars, strings and arrays.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace samplernn {

class BinaryWriter {
 public:
  BinaryWriter(const std::filesystem::path& path, std::string_view magic,
               std::uint32_t version);

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void str(std::string_view s);
  void bytes(std::span<const std::uint8_t> data);
  void f64s(std::span<const double> data);
  /// Flushes and reports write failures.
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  /// Throws DataError unless the magic matches and version <= max_version.
  BinaryReader(const std::filesystem::path& path, std::string_view magic,
               std::uint32_t max_version);

  std::uint32_t version() const { return version_; }
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::string str();
  std::vector<std::uint8_t> bytes();
  std::vector<double> f64s();

 private:
  void read(void* dst, std::size_t n);

  std::filesystem::path path_;
  std::ifstream in_;
  std::uint32_t version_ = 0;
};

/// Writes `content` to `path` through a temporary file and rename.
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace samplernn
