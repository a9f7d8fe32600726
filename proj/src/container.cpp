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

#include "samplernn/container.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "samplernn/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "containers are written in native little-endian order");

namespace samplernn {

namespace {
constexpr std::size_t kMagicSize = 8;
constexpr std::uint64_t kMaxArray = std::uint64_t{1} << 34;

std::string padded_magic(std::string_view magic) {
  std::string m(magic.substr(0, kMagicSize));
  m.resize(kMagicSize, '\0');
  return m;
}
}  // namespace

BinaryWriter::BinaryWriter(const std::filesystem::path& path,
                           std::string_view magic, std::uint32_t version)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw DataError("cannot open for writing: " + path.string());
  const std::string m = padded_magic(magic);
  out_.write(m.data(), kMagicSize);
  u32(version);
}

void BinaryWriter::u32(std::uint32_t v) {
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void BinaryWriter::u64(std::uint64_t v) {
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void BinaryWriter::i64(std::int64_t v) {
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void BinaryWriter::f64(double v) {
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void BinaryWriter::bytes(std::span<const std::uint8_t> data) {
  u64(data.size());
  out_.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size()));
}
void BinaryWriter::f64s(std::span<const double> data) {
  u64(data.size());
  out_.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size_bytes()));
}
void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw DataError("write failed: " + path_.string());
  out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path,
                           std::string_view magic, std::uint32_t max_version)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw DataError("cannot open: " + path.string());
  std::string m(kMagicSize, '\0');
  in_.read(m.data(), kMagicSize);
  if (!in_ || m != padded_magic(magic)) {
    throw DataError("bad magic in " + path.string() + " (expected " +
                    std::string(magic) + ")");
  }
  version_ = u32();
  if (version_ == 0 || version_ > max_version) {
    throw DataError("unsupported version " + std::to_string(version_) + " in " +
                    path.string());
  }
}

void BinaryReader::read(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (!in_) throw DataError("truncated container: " + path_.string());
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  read(&v, sizeof v);
  return v;
}
std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  read(&v, sizeof v);
  return v;
}
std::int64_t BinaryReader::i64() {
  std::int64_t v;
  read(&v, sizeof v);
  return v;
}
double BinaryReader::f64() {
  double v;
  read(&v, sizeof v);
  return v;
}
std::string BinaryReader::str() {
  const auto n = u64();
  if (n > kMaxArray) throw DataError("corrupt string length in " + path_.string());
  std::string s(n, '\0');
  if (n) read(s.data(), n);
  return s;
}
std::vector<std::uint8_t> BinaryReader::bytes() {
  const auto n = u64();
  if (n > kMaxArray) throw DataError("corrupt array length in " + path_.string());
  std::vector<std::uint8_t> v(n);
  if (n) read(v.data(), n);
  return v;
}
std::vector<double> BinaryReader::f64s() {
  const auto n = u64();
  if (n > kMaxArray) throw DataError("corrupt array length in " + path_.string());
  std::vector<double> v(n);
  if (n) read(v.data(), n * sizeof(double));
  return v;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace samplernn
