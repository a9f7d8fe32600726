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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "samplernn/frames.hpp"

namespace samplernn::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr int kQuantizationLevels = 256;

using Code = std::uint8_t;

/// Mono 16 kHz audio in [-1, 1] tagged with its speaker and utterance.
struct WaveformClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
  std::string speaker_id;
  std::string utterance_id;
  /// Position of samples[0] inside the source utterance (non-zero for chunks).
  std::int64_t offset = 0;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct QuantizedSequence {
  std::vector<Code> codes;
  std::string source;
};

enum class ChannelPolicy { kReject, kMixDown, kFirstChannel };

struct LoadOptions {
  ChannelPolicy channels = ChannelPolicy::kMixDown;
};

/// Decodes a RIFF/WAVE file (integer PCM or IEEE float), reduces it to mono
/// and resamples to 16 kHz.
WaveformClip load_waveform(const std::filesystem::path& path,
                           const std::string& speaker_id,
                           const std::string& utterance_id,
                           const LoadOptions& options = {});

/// Writes 16-bit PCM mono.
void save_waveform(const std::filesystem::path& path, const WaveformClip& clip);

/// Windowed-sinc sample-rate conversion.
std::vector<double> resample(std::span<const double> input, int from_rate,
                             int to_rate);

// ---------------------------------------------------------------------------
// Silence trimming

struct VadConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double threshold_above_floor_db = 6.0;
  /// Frames louder than peak minus this margin are always speech.
  double peak_margin_db = 30.0;
  /// Frames quieter than this are always silence.
  double absolute_silence_dbfs = -70.0;
  double floor_percentile = 5.0;
  double max_silence_ms = 100.0;
};

/// Half-open sample range [begin, end).
struct Segment {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t length() const { return end - begin; }
};

enum class TrimStatus { kOk, kAllSilence };

struct TrimResult {
  WaveformClip clip;
  /// Removed ranges in source-sample coordinates, ascending.
  std::vector<Segment> removed;
  TrimStatus status = TrimStatus::kOk;
};

/// Per-sample silence mask from a frame-energy VAD.
std::vector<bool> detect_silence(std::span<const double> samples, int sample_rate,
                                 const VadConfig& vad = {});

/// Shortens every silent run to at most `max_silence_ms`, removing the middle
/// of the run so the samples adjacent to speech are kept.
TrimResult trim_silences(const WaveformClip& clip, const VadConfig& vad = {});

/// Maps a source sample index to its index after `removed` ranges are cut.
std::int64_t map_through_removal(std::int64_t source_index,
                                 std::span<const Segment> removed);

// ---------------------------------------------------------------------------
// mu-law companding, 8 bit

enum class ClampPolicy { kClampAndWarn, kStrict };

Code mulaw_encode_sample(double x);
double mulaw_decode_sample(Code code);

QuantizedSequence mulaw_encode(std::span<const double> samples,
                               ClampPolicy policy = ClampPolicy::kClampAndWarn);
std::vector<double> mulaw_decode(std::span<const Code> codes);
/// Checked overload for untrusted integer codes.
std::vector<double> mulaw_decode(std::span<const int> codes);

/// Code whose decoded value is the zero-amplitude level.
inline constexpr Code kZeroCode = 128;

// ---------------------------------------------------------------------------
// Training windows

struct WindowConfig {
  int frame_size = 80;  // samples per conditioning frame
  int seq_len = 13;     // top-tier steps per window
  /// Strict: utterances shorter than one window are skipped and the final
  /// partial window is dropped. Lenient: both are padded.
  bool strict = true;

  int window_samples() const { return frame_size * seq_len; }
};

/// One truncated-BPTT training chunk.
///
/// `input_codes[n]` is the model input at position n and `target_codes[n]` is
/// the code that follows it. `history` holds the frame_size - 1 codes preceding
/// `input_codes[0]`, so the top tier always sees a full frame of past samples.
struct TrainingWindow {
  std::vector<Code> history;
  std::vector<Code> input_codes;
  std::vector<Code> target_codes;
  std::vector<ConditioningFrame> conditioning;
  std::string speaker_id;
  std::string utterance_id;
  int index = 0;  // position of the window inside its utterance

  /// history ++ input_codes, the sequence the tiers read from.
  std::vector<Code> model_input() const;
};

struct WindowingResult {
  std::vector<TrainingWindow> windows;
  std::vector<std::string> warnings;
};

WindowingResult make_windows(const QuantizedSequence& seq,
                             std::span<const ConditioningFrame> frames,
                             const std::string& speaker_id,
                             const WindowConfig& config = {});

// ---------------------------------------------------------------------------
// Persistence

void save_quantized(const std::filesystem::path& path, const QuantizedSequence& seq);
QuantizedSequence load_quantized(const std::filesystem::path& path);

}  // namespace samplernn::audio
