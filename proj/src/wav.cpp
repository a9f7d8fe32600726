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

// RIFF/WAVE decoding and sample-rate conversion.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "samplernn/audio.hpp"
#include "samplernn/error.hpp"

namespace samplernn::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

struct WavFormat {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
};

double decode_sample(const std::uint8_t* p, const WavFormat& fmt) {
  if (fmt.tag == kFormatFloat) {
    if (fmt.bits == 32) {
      float f;
      std::memcpy(&f, p, 4);
      return f;
    }
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  switch (fmt.bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(le16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(le32(p)) / 2147483648.0;
  }
}

}  // namespace

WaveformClip load_waveform(const std::filesystem::path& path,
                           const std::string& speaker_id,
                           const std::string& utterance_id,
                           const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file: " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) -> DataError {
    return DataError("cannot decode " + path.string() + ": " + why);
  };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }

  WavFormat fmt;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint8_t* chunk = buf.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = buf.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw fail("short fmt chunk");
      fmt.tag = le16(buf.data() + body);
      fmt.channels = le16(buf.data() + body + 2);
      fmt.rate = le32(buf.data() + body + 4);
      fmt.bits = le16(buf.data() + body + 14);
      if (fmt.tag == kFormatExtensible) {
        if (size < 26 || avail < 26) throw fail("short extensible fmt chunk");
        fmt.tag = le16(buf.data() + body + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1u);
  }
  if (fmt.channels == 0 || fmt.rate == 0) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  const bool int_ok = fmt.tag == kFormatPcm &&
                      (fmt.bits == 8 || fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32);
  const bool float_ok = fmt.tag == kFormatFloat && (fmt.bits == 32 || fmt.bits == 64);
  if (!int_ok && !float_ok) throw fail("unsupported sample format");

  if (fmt.channels > 1 && options.channels == ChannelPolicy::kReject) {
    throw DataError(path.string() + " has " + std::to_string(fmt.channels) +
                    " channels; mono required");
  }
  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t frames = data_size / frame_bytes;

  std::vector<double> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* p = data + i * frame_bytes;
    if (options.channels == ChannelPolicy::kFirstChannel || fmt.channels == 1) {
      mono[i] = decode_sample(p, fmt);
    } else {
      double acc = 0.0;
      for (int c = 0; c < fmt.channels; ++c) acc += decode_sample(p + c * bytes_per_sample, fmt);
      mono[i] = acc / fmt.channels;
    }
    if (!std::isfinite(mono[i])) throw fail("non-finite sample");
    mono[i] = std::clamp(mono[i], -1.0, 1.0);
  }

  WaveformClip clip;
  clip.speaker_id = speaker_id;
  clip.utterance_id = utterance_id;
  clip.sample_rate = kSampleRate;
  if (static_cast<int>(fmt.rate) == kSampleRate) {
    clip.samples = std::move(mono);
  } else {
    clip.samples = resample(mono, static_cast<int>(fmt.rate), kSampleRate);
    for (double& s : clip.samples) s = std::clamp(s, -1.0, 1.0);
  }
  return clip;
}

void save_waveform(const std::filesystem::path& path, const WaveformClip& clip) {
  std::vector<std::uint8_t> out;
  const auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  const auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  const auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);

  tag("RIFF");
  put32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  put32(16);
  put16(kFormatPcm);
  put16(1);
  put32(static_cast<std::uint32_t>(clip.sample_rate));
  put32(static_cast<std::uint32_t>(clip.sample_rate * 2));
  put16(2);
  put16(16);
  tag("data");
  put32(data_bytes);
  for (double s : clip.samples) {
    const double v = std::clamp(s, -1.0, 1.0) * 32767.0;
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v))));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<double> resample(std::span<const double> input, int from_rate,
                             int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw UsageError("sample rates must be positive");
  if (from_rate == to_rate) return {input.begin(), input.end()};

  // Hann-windowed sinc, cutoff at the lower Nyquist frequency.
  constexpr int kHalfTaps = 16;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kHalfTaps / cutoff;
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(input.size()) * to_rate / from_rate));
  const auto n_in = static_cast<std::int64_t>(input.size());

  std::vector<double> out(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = static_cast<std::int64_t>(std::ceil(t - half_width));
    const auto hi = static_cast<std::int64_t>(std::floor(t + half_width));
    double acc = 0.0;
    for (std::int64_t k = std::max<std::int64_t>(lo, 0); k <= std::min(hi, n_in - 1); ++k) {
      const double x = (static_cast<double>(k) - t) * cutoff;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * (k - t) / half_width);
      acc += input[static_cast<std::size_t>(k)] * sinc * w * cutoff;
    }
    out[n] = acc;
  }
  return out;
}

}  // namespace samplernn::audio
