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

// Speaker identity vectors: a trainable per-speaker table, or the time average
// of speech-encoder frames computed over a short seed recording.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "samplernn/audio.hpp"
#include "samplernn/speaker.hpp"

namespace samplernn::embeddings {

inline constexpr int kEmbeddingSize = 100;
/// Encoder hop: 16 kHz decimated to 100 Hz.
inline constexpr int kEncoderHop = 160;

struct EncoderFrames {
  Eigen::MatrixXd frames;  // dim x L, one column per 10 ms frame
  std::string source;

  int dim() const { return static_cast<int>(frames.rows()); }
  int count() const { return static_cast<int>(frames.cols()); }
};

/// Expected frame count for a clip of `num_samples`.
inline std::int64_t encoder_frame_count(std::int64_t num_samples) {
  return num_samples / kEncoderHop;
}

class SpeechEncoder {
 public:
  virtual ~SpeechEncoder() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  /// Shortest clip that produces a frame.
  virtual std::int64_t min_samples() const { return kEncoderHop; }
  virtual EncoderFrames encode(const audio::WaveformClip& clip) const = 0;
};

/// Validates the clip, encodes it and checks the output contract.
EncoderFrames encode_frames(const audio::WaveformClip& clip, const SpeechEncoder& encoder);

/// Frames written beforehand by an external encoder, one file per utterance
/// (`<dir>/<utterance_id>.frames`). Chunks are resolved through the clip's
/// utterance id and sample offset.
class PrecomputedEncoder final : public SpeechEncoder {
 public:
  explicit PrecomputedEncoder(std::filesystem::path directory, int dim = kEmbeddingSize);

  std::string name() const override { return "precomputed:" + directory_.string(); }
  int dim() const override { return dim_; }
  EncoderFrames encode(const audio::WaveformClip& clip) const override;

 private:
  std::filesystem::path directory_;
  int dim_;
  mutable std::map<std::string, Eigen::MatrixXd> cache_;
};

void save_encoder_frames(const std::filesystem::path& path, const EncoderFrames& frames);
EncoderFrames load_encoder_frames(const std::filesystem::path& path);

/// Deterministic spectral statistics: 50 log-mel energies, 25 cepstra and 25
/// cepstral deltas per 10 ms frame.
class MfccStatsEncoder final : public SpeechEncoder {
 public:
  std::string name() const override { return "mfcc-stats"; }
  int dim() const override { return kEmbeddingSize; }
  EncoderFrames encode(const audio::WaveformClip& clip) const override;
};

/// Opens an encoder from a CLI-style spec: `mfcc`, `conv:<checkpoint>` or
/// `precomputed:<directory>`.
std::unique_ptr<SpeechEncoder> open_encoder(const std::string& spec);

/// Time average of encoder frames.
SpeakerEmbedding average_embedding(const EncoderFrames& frames, const std::string& speaker_id,
                                   Provenance provenance);
/// Average over the pooled frames of several chunks.
SpeakerEmbedding average_embedding(std::span<const EncoderFrames> chunks,
                                   const std::string& speaker_id, Provenance provenance);

struct SeedSignal {
  std::string speaker_id;
  std::string id;  // reproducible label: speaker, length and rng seed
  std::vector<audio::WaveformClip> chunks;

  std::int64_t num_samples() const;
  double seconds() const { return static_cast<double>(num_samples()) / audio::kSampleRate; }
};

/// Draws whole-second chunks uniformly without replacement from the speaker's
/// pool until `seconds` are collected. Chunks never straddle utterances.
SeedSignal sample_seed(std::span<const audio::WaveformClip> pool, double seconds,
                       std::uint64_t rng_seed);

/// Encodes each chunk separately and averages the pooled frames.
SpeakerEmbedding embed_seed(const SeedSignal& seed, const SpeechEncoder& encoder);

/// Chunk-level frame cache so nested seeds do not re-encode audio.
class CachedEncoder final : public SpeechEncoder {
 public:
  explicit CachedEncoder(const SpeechEncoder& inner) : inner_(inner) {}
  std::string name() const override { return inner_.name(); }
  int dim() const override { return inner_.dim(); }
  std::int64_t min_samples() const override { return inner_.min_samples(); }
  EncoderFrames encode(const audio::WaveformClip& clip) const override;

 private:
  const SpeechEncoder& inner_;
  mutable std::map<std::string, EncoderFrames> cache_;
};

/// Trainable per-speaker vectors for the closed training set.
class OneHotTable {
 public:
  OneHotTable(std::vector<std::string> speakers, int dim, std::uint64_t seed);

  int size() const { return static_cast<int>(speakers_.size()); }
  int dim() const { return static_cast<int>(table_.rows()); }
  const std::vector<std::string>& speakers() const { return speakers_; }
  Eigen::MatrixXd& table() { return table_; }
  const Eigen::MatrixXd& table() const { return table_; }

  int index_of(const std::string& speaker) const;
  SpeakerEmbedding lookup(int index) const;
  SpeakerEmbedding lookup(const std::string& speaker) const { return lookup(index_of(speaker)); }

 private:
  std::vector<std::string> speakers_;
  Eigen::MatrixXd table_;  // dim x speakers
};

// Embedding records: text, one speaker per file.
void save_embedding(const std::filesystem::path& path, const SpeakerEmbedding& embedding);
SpeakerEmbedding load_embedding(const std::filesystem::path& path);
/// `<dir>/<speaker>.emb` for every embedding.
void save_embeddings(const std::filesystem::path& dir, std::span<const SpeakerEmbedding> all);
std::map<std::string, SpeakerEmbedding> load_embeddings(const std::filesystem::path& dir);

}  // namespace samplernn::embeddings
