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

// Objective distortion between reference and synthesized speech, and the
// distortion-versus-seed-length experiment for unseen speakers.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "samplernn/audio.hpp"
#include "samplernn/conditioning.hpp"
#include "samplernn/embeddings.hpp"
#include "samplernn/model.hpp"

namespace samplernn::evaluation {

/// Mel cepstra c0..c24, 25 ms Hamming window, 5 ms hop; one column per frame.
struct CepstraTrack {
  Eigen::MatrixXd coeffs;

  Eigen::Index frames() const { return coeffs.cols(); }
};

CepstraTrack extract_cepstra(const audio::WaveformClip& clip);

/// Frame-count slack tolerated before comparing (the longer track is truncated).
inline constexpr Eigen::Index kFrameTolerance = 2;

/// Mean over frames of (10 / ln 10) * sqrt(2 * sum_{d=1..24} (c_d - c'_d)^2).
double mcd(const CepstraTrack& ref, const CepstraTrack& syn);

struct F0Error {
  double rmse_hz = 0.0;
  std::int64_t voiced_frames = 0;  // frames voiced in both tracks
  bool defined() const { return voiced_frames > 0; }
};

/// RMSE in Hz over jointly voiced frames; undefined when there are none.
F0Error rmse_f0(const conditioning::ProsodyTrack& ref, const conditioning::ProsodyTrack& syn);

struct UtteranceScore {
  std::string speaker;
  std::string utterance;
  double seed_seconds = 0.0;  // 0 when the embedding did not come from a seed
  double mcd_db = 0.0;
  double rmse_f0_hz = 0.0;    // NaN when undefined
  std::int64_t frames = 0;
  std::int64_t voiced_frames = 0;
};

UtteranceScore score_utterance(const audio::WaveformClip& reference,
                               const audio::WaveformClip& synthesized);

struct SpeakerScore {
  std::string speaker;
  double seed_seconds = 0.0;
  double mcd_db = 0.0;
  double rmse_f0_hz = 0.0;  // mean over utterances with a defined value; NaN if none
  int utterances = 0;
};

struct CurvePoint {
  double seed_seconds = 0.0;
  double mcd_db = 0.0;
  double rmse_f0_hz = 0.0;
  int speakers = 0;
  int rmse_speakers = 0;
};

struct DistortionReport {
  std::vector<UtteranceScore> utterances;
  std::vector<SpeakerScore> speakers;
  std::vector<CurvePoint> curve;

  /// Rebuilds speaker rows and curve points from the utterance rows.
  void aggregate();

  std::string utterances_csv() const;
  std::string speakers_csv() const;
  std::string curve_csv() const;
};

std::vector<CurvePoint> parse_curve_csv(const std::string& text);

struct TestUtterance {
  std::string id;
  std::vector<ConditioningFrame> frames;  // normalized, model layout
  audio::WaveformClip reference;          // trimmed recording
};

struct AdaptationSpeaker {
  std::string id;
  std::vector<audio::WaveformClip> seed_pool;
  std::vector<TestUtterance> tests;
};

struct CurveOptions {
  std::vector<double> seed_seconds{1, 10, 60, 120};
  std::uint64_t seed = 1;
  model::SamplingOptions sampling;
  /// Caps synthesized test utterances per speaker; 0 means all.
  int max_test_utterances = 0;
  /// Caps synthesized duration per test utterance in frames; 0 means all.
  int max_frames = 0;
};

std::vector<double> default_seed_seconds();

/// For each speaker and seed length: sample a seed, average encoder frames into
/// an embedding, synthesize the speaker's test utterances and score them.
DistortionReport adaptation_curve(const model::SampleRnn<float>& model,
                                  const embeddings::SpeechEncoder& encoder,
                                  std::span<const AdaptationSpeaker> speakers,
                                  const CurveOptions& options = {});

/// Decodes generated codes into a 16 kHz clip.
audio::WaveformClip codes_to_clip(const audio::QuantizedSequence& codes, const std::string& speaker,
                                  const std::string& utterance);

}  // namespace samplernn::evaluation
