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

// Helpers shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "samplernn/audio.hpp"
#include "samplernn/frames.hpp"
#include "samplernn/model.hpp"
#include "samplernn/speaker.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("samplernn-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void put_u16(std::ofstream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}
inline void put_u32(std::ofstream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

/// 16-bit PCM WAV written byte by byte, interleaved when channels > 1.
inline void write_pcm16(const fs::path& path, const std::vector<double>& interleaved, int rate,
                        int channels = 1) {
  std::ofstream out(path, std::ios::binary);
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(rate));
  put_u32(out, static_cast<std::uint32_t>(rate * channels * 2));
  put_u16(out, static_cast<std::uint16_t>(channels * 2));
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double x : interleaved) {
    const long v = std::lround(std::clamp(x, -1.0, 1.0) * 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<double> sine(double hz, double seconds, double amplitude, int rate = 16000) {
  std::vector<double> out(static_cast<std::size_t>(std::lround(seconds * rate)));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = amplitude * std::sin(2.0 * 3.14159265358979323846 * hz * static_cast<double>(i) / rate);
  }
  return out;
}

inline samplernn::audio::WaveformClip clip_of(std::vector<double> samples,
                                              const std::string& speaker = "spk",
                                              const std::string& utt = "utt") {
  samplernn::audio::WaveformClip c;
  c.samples = std::move(samples);
  c.speaker_id = speaker;
  c.utterance_id = utt;
  return c;
}

/// Small model spec: two categorical answers, three numeric, logF0/UV.
inline samplernn::model::ModelSpec micro_spec(int hidden, int code_embedding,
                                              samplernn::model::SpeakerMode mode) {
  samplernn::model::ModelSpec s;
  s.config.hidden_size = hidden;
  s.config.code_embedding_size = code_embedding;
  s.layout.categorical_vocab = {5, 7};
  s.layout.numeric = 3;
  s.layout.f0uv = true;
  s.speaker_mode = mode;
  s.speakers = {"a", "b"};
  return s;
}

inline samplernn::ConditioningFrame random_frame(const samplernn::conditioning::FeatureLayout& l,
                                                 std::mt19937_64& rng) {
  samplernn::ConditioningFrame f;
  for (int v : l.categorical_vocab) {
    f.values.push_back(static_cast<double>(std::uniform_int_distribution<int>(0, v - 1)(rng)));
  }
  std::normal_distribution<double> n;
  for (int i = l.num_categorical(); i < l.dim(); ++i) f.values.push_back(n(rng));
  return f;
}

inline std::vector<samplernn::ConditioningFrame> random_frames(
    const samplernn::conditioning::FeatureLayout& l, int count, std::mt19937_64& rng) {
  std::vector<samplernn::ConditioningFrame> out;
  for (int i = 0; i < count; ++i) out.push_back(random_frame(l, rng));
  return out;
}

/// Codes drawn around the zero level so decoded amplitudes stay speech-like.
inline std::vector<samplernn::audio::Code> random_codes(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(96, 160);
  std::vector<samplernn::audio::Code> out(n);
  for (auto& c : out) c = static_cast<samplernn::audio::Code>(d(rng));
  return out;
}

inline samplernn::audio::TrainingWindow random_window(const samplernn::model::ModelSpec& s,
                                                      std::mt19937_64& rng) {
  const int F = s.config.frame_size;
  const int W = s.config.window_samples();
  samplernn::audio::TrainingWindow w;
  const auto stream = random_codes(static_cast<std::size_t>(F - 1 + W + 1), rng);
  w.history.assign(stream.begin(), stream.begin() + (F - 1));
  w.input_codes.assign(stream.begin() + (F - 1), stream.begin() + (F - 1 + W));
  w.target_codes.assign(stream.begin() + F, stream.end());
  w.conditioning = random_frames(s.layout, s.config.seq_len, rng);
  w.speaker_id = "b";
  w.utterance_id = "u";
  return w;
}

inline samplernn::SpeakerEmbedding table_speaker(int index, const std::string& id) {
  samplernn::SpeakerEmbedding e;
  e.speaker_id = id;
  e.provenance = samplernn::OneHotProvenance{index};
  return e;
}

inline samplernn::SpeakerEmbedding vector_speaker(int dim, std::uint64_t seed,
                                                  const std::string& id = "x") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  samplernn::SpeakerEmbedding e;
  e.speaker_id = id;
  e.vector.resize(dim);
  for (int i = 0; i < dim; ++i) e.vector[i] = n(rng);
  e.provenance = samplernn::EncoderProvenance{"test", 1.0};
  return e;
}

}  // namespace testing
