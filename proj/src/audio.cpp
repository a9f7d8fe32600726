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

#include "samplernn/audio.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "samplernn/container.hpp"
#include "samplernn/error.hpp"

namespace samplernn::audio {

// ---------------------------------------------------------------------------
// Silence trimming

std::vector<bool> detect_silence(std::span<const double> samples, int sample_rate,
                                 const VadConfig& vad) {
  const auto n = static_cast<std::int64_t>(samples.size());
  std::vector<bool> silent(samples.size(), false);
  if (n == 0) return silent;

  const auto win = std::max<std::int64_t>(1, std::llround(vad.window_ms * sample_rate / 1000.0));
  const auto hop = std::max<std::int64_t>(1, std::llround(vad.hop_ms * sample_rate / 1000.0));
  const std::int64_t num_frames = (n + hop - 1) / hop;

  std::vector<double> energy_db(static_cast<std::size_t>(num_frames));
  for (std::int64_t k = 0; k < num_frames; ++k) {
    const std::int64_t b = k * hop;
    const std::int64_t e = std::min(b + win, n);
    double acc = 0.0;
    for (std::int64_t i = b; i < e; ++i) acc += samples[i] * samples[i];
    energy_db[k] = 10.0 * std::log10(acc / static_cast<double>(e - b) + 1e-12);
  }

  std::vector<double> sorted = energy_db;
  const auto pidx = static_cast<std::size_t>(
      std::floor(vad.floor_percentile / 100.0 * static_cast<double>(sorted.size() - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(pidx), sorted.end());
  const double floor_db = sorted[pidx];
  const double peak_db = *std::max_element(energy_db.begin(), energy_db.end());
  const double threshold = floor_db + vad.threshold_above_floor_db;

  std::vector<bool> frame_silent(static_cast<std::size_t>(num_frames));
  for (std::int64_t k = 0; k < num_frames; ++k) {
    const double e = energy_db[k];
    frame_silent[k] = e < vad.absolute_silence_dbfs ||
                      (e < threshold && e < peak_db - vad.peak_margin_db);
  }

  // A sample is silent only when every frame covering it is silent.
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t k_hi = i / hop;
    const std::int64_t k_lo = std::max<std::int64_t>(0, (i - win + hop) / hop);
    bool all = true;
    for (std::int64_t k = k_lo; k <= std::min(k_hi, num_frames - 1) && all; ++k) {
      all = frame_silent[k];
    }
    silent[i] = all;
  }

  // Sample-accurate run edges: absorb adjacent samples below the absolute level.
  const double amp_floor = std::pow(10.0, vad.absolute_silence_dbfs / 20.0);
  for (std::int64_t i = 1; i < n; ++i) {
    if (silent[i - 1] && !silent[i] && std::abs(samples[i]) < amp_floor) silent[i] = true;
  }
  for (std::int64_t i = n - 2; i >= 0; --i) {
    if (silent[i + 1] && !silent[i] && std::abs(samples[i]) < amp_floor) silent[i] = true;
  }
  return silent;
}

TrimResult trim_silences(const WaveformClip& clip, const VadConfig& vad) {
  const auto silent = detect_silence(clip.samples, clip.sample_rate, vad);
  const auto max_len = static_cast<std::int64_t>(
      std::llround(vad.max_silence_ms * clip.sample_rate / 1000.0));
  const auto n = static_cast<std::int64_t>(clip.samples.size());

  TrimResult result;
  result.clip = clip;
  result.clip.samples.clear();
  result.clip.samples.reserve(clip.samples.size());

  std::int64_t i = 0;
  while (i < n) {
    if (!silent[i]) {
      result.clip.samples.push_back(clip.samples[i]);
      ++i;
      continue;
    }
    std::int64_t j = i;
    while (j < n && silent[j]) ++j;
    const std::int64_t run = j - i;
    if (run <= max_len) {
      result.clip.samples.insert(result.clip.samples.end(), clip.samples.begin() + i,
                                 clip.samples.begin() + j);
    } else {
      const std::int64_t head = max_len / 2;
      const std::int64_t tail = max_len - head;
      result.clip.samples.insert(result.clip.samples.end(), clip.samples.begin() + i,
                                 clip.samples.begin() + i + head);
      result.clip.samples.insert(result.clip.samples.end(), clip.samples.begin() + j - tail,
                                 clip.samples.begin() + j);
      result.removed.push_back({i + head, j - tail});
    }
    i = j;
  }
  if (n > 0 && std::all_of(silent.begin(), silent.end(), [](bool s) { return s; })) {
    result.status = TrimStatus::kAllSilence;
    spdlog::warn("utterance {} is entirely silent; trimmed output has {} samples",
                 clip.utterance_id, result.clip.samples.size());
  }
  return result;
}

std::int64_t map_through_removal(std::int64_t source_index,
                                 std::span<const Segment> removed) {
  std::int64_t shift = 0;
  for (const auto& seg : removed) {
    if (source_index >= seg.end) {
      shift += seg.length();
    } else if (source_index > seg.begin) {
      shift += source_index - seg.begin;
    } else {
      break;
    }
  }
  return source_index - shift;
}

// ---------------------------------------------------------------------------
// mu-law

namespace {
constexpr double kMu = 255.0;
const double kLogMuPlusOne = std::log(256.0);
}  // namespace

Code mulaw_encode_sample(double x) {
  x = std::clamp(x, -1.0, 1.0);
  const double f = std::copysign(std::log1p(kMu * std::abs(x)) / kLogMuPlusOne, x);
  const double scaled = std::floor((f + 1.0) / 2.0 * kMu + 0.5);
  return static_cast<Code>(std::clamp(scaled, 0.0, 255.0));
}

double mulaw_decode_sample(Code code) {
  const double y = 2.0 * code / kMu - 1.0;
  return std::copysign(std::expm1(std::abs(y) * kLogMuPlusOne) / kMu, y);
}

QuantizedSequence mulaw_encode(std::span<const double> samples, ClampPolicy policy) {
  QuantizedSequence seq;
  seq.codes.resize(samples.size());
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double x = samples[i];
    if (std::isnan(x)) throw DataError("NaN sample at index " + std::to_string(i));
    if (x < -1.0 || x > 1.0) {
      if (policy == ClampPolicy::kStrict) {
        throw DataError("sample " + std::to_string(x) + " out of [-1, 1] at index " +
                        std::to_string(i));
      }
      ++clamped;
    }
    seq.codes[i] = mulaw_encode_sample(x);
  }
  if (clamped > 0) spdlog::warn("mu-law encode clamped {} out-of-range samples", clamped);
  return seq;
}

std::vector<double> mulaw_decode(std::span<const Code> codes) {
  std::vector<double> out(codes.size());
  std::transform(codes.begin(), codes.end(), out.begin(), mulaw_decode_sample);
  return out;
}

std::vector<double> mulaw_decode(std::span<const int> codes) {
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0 || codes[i] > 255) {
      throw DataError("mu-law code " + std::to_string(codes[i]) + " out of [0, 255]");
    }
    out[i] = mulaw_decode_sample(static_cast<Code>(codes[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windows

std::vector<Code> TrainingWindow::model_input() const {
  std::vector<Code> seq;
  seq.reserve(history.size() + input_codes.size());
  seq.insert(seq.end(), history.begin(), history.end());
  seq.insert(seq.end(), input_codes.begin(), input_codes.end());
  return seq;
}

WindowingResult make_windows(const QuantizedSequence& seq,
                             std::span<const ConditioningFrame> frames,
                             const std::string& speaker_id, const WindowConfig& config) {
  const std::size_t fs = static_cast<std::size_t>(config.frame_size);
  const std::size_t wlen = static_cast<std::size_t>(config.window_samples());
  const std::size_t n = seq.codes.size();
  const std::size_t expected_frames = (n + fs - 1) / fs;
  if (frames.size() != expected_frames) {
    throw DataError("utterance " + seq.source + ": " + std::to_string(frames.size()) +
                    " conditioning frames for " + std::to_string(n) +
                    " samples (expected " + std::to_string(expected_frames) + ")");
  }

  WindowingResult result;
  std::vector<Code> codes = seq.codes;
  std::vector<ConditioningFrame> conds(frames.begin(), frames.end());
  if (n < wlen && config.strict) {
    result.warnings.push_back("utterance " + seq.source + " has " + std::to_string(n) +
                              " samples, shorter than one window; skipped");
    return result;
  }
  if (!config.strict && n % wlen != 0) {
    const std::size_t padded = (n / wlen + 1) * wlen;
    codes.resize(padded, kZeroCode);
    if (conds.empty()) conds.push_back(ConditioningFrame{});
    conds.resize(padded / fs, conds.back());
  }

  // Input stream: frame_size zero-amplitude codes followed by the utterance.
  // Window k starts one code before codes[k * wlen], so target_codes[n] is
  // codes[k * wlen + n], and the frame_size - 1 codes before it are history.
  const std::size_t pad = fs;
  std::vector<Code> stream(pad, kZeroCode);
  stream.insert(stream.end(), codes.begin(), codes.end());

  const std::size_t num_windows = codes.size() / wlen;
  for (std::size_t k = 0; k < num_windows; ++k) {
    TrainingWindow w;
    const std::size_t input_begin = pad - 1 + k * wlen;
    w.history.assign(stream.begin() + static_cast<std::ptrdiff_t>(input_begin - (fs - 1)),
                     stream.begin() + static_cast<std::ptrdiff_t>(input_begin));
    w.input_codes.assign(stream.begin() + static_cast<std::ptrdiff_t>(input_begin),
                         stream.begin() + static_cast<std::ptrdiff_t>(input_begin + wlen));
    w.target_codes.assign(stream.begin() + static_cast<std::ptrdiff_t>(input_begin + 1),
                          stream.begin() + static_cast<std::ptrdiff_t>(input_begin + 1 + wlen));
    const std::size_t f0 = k * static_cast<std::size_t>(config.seq_len);
    w.conditioning.assign(conds.begin() + static_cast<std::ptrdiff_t>(f0),
                          conds.begin() + static_cast<std::ptrdiff_t>(f0 + config.seq_len));
    w.speaker_id = speaker_id;
    w.utterance_id = seq.source;
    w.index = static_cast<int>(k);
    result.windows.push_back(std::move(w));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {
constexpr std::string_view kQuantizedMagic = "SRNNQSEQ";
constexpr std::uint32_t kQuantizedVersion = 1;
}  // namespace

void save_quantized(const std::filesystem::path& path, const QuantizedSequence& seq) {
  BinaryWriter w(path, kQuantizedMagic, kQuantizedVersion);
  w.str(seq.source);
  w.bytes(seq.codes);
  w.close();
}

QuantizedSequence load_quantized(const std::filesystem::path& path) {
  BinaryReader r(path, kQuantizedMagic, kQuantizedVersion);
  QuantizedSequence seq;
  seq.source = r.str();
  seq.codes = r.bytes();
  return seq;
}

}  // namespace samplernn::audio
