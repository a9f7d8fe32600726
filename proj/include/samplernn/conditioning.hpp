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

// Linguistic-prosodic conditioning: label parsing, per-interval duration and
// prosody features, and speaker-dependent z-normalization.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "samplernn/audio.hpp"
#include "samplernn/frames.hpp"

namespace samplernn::conditioning {

enum class FeatureKind { kCategorical, kNumeric };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  int vocab = 0;  // categorical only
};

/// Declares the per-phone label answers in file order and which of them are
/// categorical. Loaded from a text file with one `name categorical <vocab>` or
/// `name numeric` line per feature.
struct FeatureSchema {
  std::vector<FeatureSpec> features;

  int size() const { return static_cast<int>(features.size()); }
  int num_categorical() const;
  int num_numeric() const;
  std::vector<int> categorical_vocab() const;

  /// Five quinphone identity answers (categorical) and 48 numeric answers.
  static FeatureSchema standard(int phone_vocab = 64);
  static FeatureSchema load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct PhonemeAnnotation {
  double start_time = 0.0;  // seconds
  double end_time = 0.0;
  std::vector<int> categorical;
  std::vector<double> numeric;

  double duration() const { return end_time - start_time; }
};

/// Time-aligned label text: `<start> <end> <answer>...` per line, times in
/// HTK units of 100 ns, answers in schema order. Blank lines and lines
/// starting with '#' are ignored.
std::vector<PhonemeAnnotation> parse_labels(std::string_view text, const FeatureSchema& schema,
                                            const std::string& source = "<labels>");
std::vector<PhonemeAnnotation> parse_label_file(const std::filesystem::path& path,
                                                const FeatureSchema& schema);
std::string format_labels(std::span<const PhonemeAnnotation> annotations,
                          const FeatureSchema& schema);

/// Moves label boundaries to follow samples removed by silence trimming.
/// Phones that vanish entirely are dropped.
std::vector<PhonemeAnnotation> remap_annotations(std::span<const PhonemeAnnotation> annotations,
                                                 std::span<const audio::Segment> removed,
                                                 int sample_rate);

struct DurationFeature {
  double absolute = 0.0;  // seconds, duration of the covering phone
  double relative = 0.0;  // interval midpoint position inside the phone, [0, 1]
  int phoneme = 0;        // index of the covering phone
};

/// One entry per `frame_size`-sample interval. `num_frames` < 0 derives the
/// count from the last phone's end time.
std::vector<DurationFeature> append_duration_features(
    std::span<const PhonemeAnnotation> annotations, int frame_size, int sample_rate,
    std::int64_t num_frames = -1);

struct ProsodyTrack {
  std::vector<double> log_f0;    // natural log Hz, one per interval
  std::vector<std::uint8_t> uv;  // 1 voiced, 0 unvoiced (log_f0 interpolated)

  std::size_t size() const { return log_f0.size(); }
};

struct F0Config {
  int frame_size = 80;  // hop, aligned to the conditioning interval
  int window = 400;     // 25 ms
  double min_hz = 50.0;
  double max_hz = 500.0;
  double voicing_threshold = 0.3;
  double silence_dbfs = -50.0;
  double default_hz = 100.0;
};

/// Normalized-autocorrelation pitch tracker. Frames are centred on each
/// interval; there are ceil(num_samples / frame_size) of them.
ProsodyTrack extract_f0_uv(const audio::WaveformClip& clip, const F0Config& config = {});

/// Column layout of a ConditioningFrame:
/// [categorical ids | numeric answers | abs duration | rel duration | (logF0 | UV)].
struct FeatureLayout {
  std::vector<int> categorical_vocab;
  int numeric = 0;
  bool f0uv = true;

  static FeatureLayout from_schema(const FeatureSchema& schema, bool with_f0uv);

  int num_categorical() const { return static_cast<int>(categorical_vocab.size()); }
  int dim() const { return num_categorical() + numeric + 2 + (f0uv ? 2 : 0); }
  int abs_duration_index() const { return num_categorical() + numeric; }
  int rel_duration_index() const { return abs_duration_index() + 1; }
  int log_f0_index() const { return abs_duration_index() + 2; }
  int uv_index() const { return abs_duration_index() + 3; }
  /// Real-valued components subject to z-normalization.
  bool is_normalized(int index) const;

  bool operator==(const FeatureLayout&) const = default;
};

/// Piecewise-constant phone answers, duration features and (optionally)
/// prosody, one frame per interval.
std::vector<ConditioningFrame> upsample_to_frames(std::span<const PhonemeAnnotation> annotations,
                                                  std::span<const DurationFeature> durations,
                                                  const ProsodyTrack* prosody,
                                                  const FeatureLayout& layout);

/// Drops the trailing logF0/UV columns (variant without prosody).
std::vector<ConditioningFrame> drop_f0uv(std::span<const ConditioningFrame> frames,
                                         const FeatureLayout& with_f0uv);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> included;  // false: passthrough or degenerate
  std::int64_t frames = 0;
};

struct SpeakerStats {
  std::map<std::string, FeatureStats> speakers;

  const FeatureStats& at(const std::string& speaker) const;
  void save(const std::filesystem::path& path) const;
  static SpeakerStats load(const std::filesystem::path& path);
};

/// Order-independent accumulation of per-speaker feature statistics. Partial
/// moments are kept per utterance and merged in utterance-id order, so the
/// result does not depend on the order utterances are added in.
class SpeakerStatsBuilder {
 public:
  explicit SpeakerStatsBuilder(FeatureLayout layout) : layout_(std::move(layout)) {}

  void add(const std::string& speaker, const std::string& utterance,
           std::span<const ConditioningFrame> frames);
  SpeakerStats build() const;

 private:
  struct Moments {
    std::int64_t n = 0;
    std::vector<double> mean;
    std::vector<double> m2;
  };
  FeatureLayout layout_;
  std::map<std::string, std::map<std::string, Moments>> partial_;
};

std::vector<ConditioningFrame> zscore_normalize(std::span<const ConditioningFrame> frames,
                                                const SpeakerStats& stats,
                                                const std::string& speaker);
std::vector<ConditioningFrame> zscore_denormalize(std::span<const ConditioningFrame> frames,
                                                  const SpeakerStats& stats,
                                                  const std::string& speaker);

void save_frames(const std::filesystem::path& path, std::span<const ConditioningFrame> frames);
std::vector<ConditioningFrame> load_frames(const std::filesystem::path& path);

}  // namespace samplernn::conditioning
