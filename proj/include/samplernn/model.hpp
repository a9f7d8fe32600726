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

// Conditioned hierarchical waveform model: frame-level GRU tiers with learned
// upsampling, and a sample-level MLP over 256 mu-law classes. A global
// conditioning vector, an affine map of [speaker embedding ; linguistic frame],
// is fed to every tier and to the sample level.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samplernn/audio.hpp"
#include "samplernn/conditioning.hpp"
#include "samplernn/config.hpp"
#include "samplernn/frames.hpp"
#include "samplernn/nn.hpp"
#include "samplernn/speaker.hpp"

namespace samplernn::model {

struct ModelConfig {
  int frame_size = 80;  // samples per conditioning interval / top-tier frame
  int seq_len = 13;     // top-tier steps per training window
  std::vector<int> ratios{4, 20};
  int hidden_size = 1024;
  int speaker_embedding_size = 100;
  int global_features_size = 50;
  int categorical_embedding_size = 15;
  int quantization_levels = 256;
  int sample_order = 20;
  int code_embedding_size = 256;

  void validate() const;
  int window_samples() const { return frame_size * seq_len; }
  int num_tiers() const { return static_cast<int>(ratios.size()); }
  /// Frame size of every tier, top first ({80, 20}).
  std::vector<int> tier_frame_sizes() const;

  static ModelConfig from_config(const KeyValueConfig& cfg);
  void to_config(KeyValueConfig& cfg) const;

  bool operator==(const ModelConfig&) const = default;
};

enum class SpeakerMode { kOneHotTable, kEncoder };

std::string to_string(SpeakerMode mode);
SpeakerMode speaker_mode_from_string(const std::string& s);

/// Everything needed to rebuild a model's parameter shapes.
struct ModelSpec {
  ModelConfig config;
  conditioning::FeatureLayout layout;
  SpeakerMode speaker_mode = SpeakerMode::kEncoder;
  /// Training speakers in table order (one-hot mode); informational otherwise.
  std::vector<std::string> speakers;

  bool operator==(const ModelSpec&) const = default;
};

enum class SamplingMode { kCategorical, kArgmax };

struct SamplingOptions {
  SamplingMode mode = SamplingMode::kCategorical;
  double temperature = 1.0;
};

template <typename T>
class SampleRnn {
 public:
  using Mat = nn::Matrix<T>;
  using Vec = nn::Vector<T>;

  struct Tier {
    Mat w_in, b_in;    // H x (frame + C)
    Mat w_ih, b_ih;    // 3H x H, gates ordered reset, update, candidate
    Mat w_hh, b_hh;    // 3H x H
    Mat h0;            // learned initial state
    Mat w_up, b_up;    // (ratio * H) x H
  };

  struct Params {
    std::vector<Mat> categorical_embeddings;  // one (emb x vocab) table per answer
    Mat speaker_table;                        // E x speakers, one-hot mode only
    Mat w_cond, b_cond;                       // C x (E + expanded V)
    std::vector<Tier> tiers;
    Mat code_embedding;                       // Qe x 256
    Mat w_sample_in;                          // H x (order * Qe)
    Mat w_sample_cond;                        // H x C
    Mat b_sample1;
    Mat w_sample2, b_sample2;
    Mat w_out, b_out;                         // 256 x H

    std::vector<nn::NamedTensor<T>> named();
    std::vector<nn::NamedTensor<T>> named() const;
    Params zeros_like() const;
    void set_zero();
  };

  /// Recurrent state of every tier. `fresh` means the hidden vectors are the
  /// learned initial states, so gradients reaching them update h0.
  struct State {
    std::vector<Vec> hidden;
    bool fresh = true;
  };

  struct TierStep {
    Mat conditioning;  // H x ratio, one column per lower-tier step
    Vec state;
  };

  struct WindowResult {
    double mean_nll = 0.0;           // nats per sample
    Vec position_nll;                // per target position
    Mat probabilities;               // 256 x positions, when requested
  };

  SampleRnn(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const ModelConfig& config() const { return spec_.config; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  State initial_state() const;

  /// Resolves the identity vector used for conditioning. Table embeddings are
  /// read from this model's own table; unknown indices throw.
  Vec speaker_vector(const SpeakerEmbedding& e) const;
  /// Current table row for a training speaker.
  SpeakerEmbedding table_embedding(int index) const;

  /// c = W [e ; l] + b with categorical answers replaced by their embeddings.
  Vec global_conditioning(const Vec& speaker, const ConditioningFrame& frame) const;

  /// One recurrent step of `tier`. `upper` is the conditioning vector from the
  /// tier above (ignored for the top tier).
  TierStep tier_step(int tier, std::span<const T> prev_frame, const Vec* upper, const Vec& c,
                     const Vec& state) const;
  TierStep top_tier_step(std::span<const T> prev_frame, const Vec& c, const Vec& state) const {
    return tier_step(0, prev_frame, nullptr, c, state);
  }
  TierStep mid_tier_step(std::span<const T> prev_frame, const Vec& top_conditioning,
                         const Vec& c, const Vec& state) const {
    return tier_step(1, prev_frame, &top_conditioning, c, state);
  }

  Vec sample_logits(std::span<const audio::Code> prev, const Vec& sample_conditioning,
                    const Vec& c) const;
  /// Distribution over the next code from the last `sample_order` codes.
  Vec sample_level_predict(std::span<const audio::Code> prev, const Vec& sample_conditioning,
                           const Vec& c) const;

  /// Teacher-forced forward pass over one window, carrying `state` across
  /// windows. When `grads` is given, d(loss_scale * mean NLL)/d(params) is
  /// accumulated into it (truncated at the window boundary).
  WindowResult forward_training(const audio::TrainingWindow& window,
                                const SpeakerEmbedding& speaker, State& state,
                                Params* grads = nullptr, double loss_scale = 1.0,
                                bool keep_probabilities = false) const;

  /// Autoregressive synthesis of 80 codes per conditioning frame.
  audio::QuantizedSequence generate(std::span<const ConditioningFrame> frames,
                                    const SpeakerEmbedding& speaker, std::uint64_t seed,
                                    const SamplingOptions& sampling = {}) const;

  /// Per-position log-probabilities of `codes` computed by the step-wise
  /// (generation) path with teacher forcing. Used to cross-check the batched
  /// forward pass.
  Vec stepwise_log_probs(std::span<const ConditioningFrame> frames,
                         const SpeakerEmbedding& speaker,
                         std::span<const audio::Code> codes) const;

 private:
  struct Forward;

  Mat expand_conditioning(const Vec& speaker, std::span<const ConditioningFrame> frames) const;
  void check_frame(const ConditioningFrame& f) const;

  ModelSpec spec_;
  Params params_;
};

extern template class SampleRnn<float>;
extern template class SampleRnn<double>;

/// Versioned container holding the spec and every parameter tensor (stored as
/// float64 so either precision can load it).
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const SampleRnn<T>& model,
                     const std::map<std::string, std::string>& metadata = {});

struct CheckpointInfo {
  ModelSpec spec;
  std::map<std::string, std::string> metadata;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Loads a checkpoint; when `expected` is given the stored spec must match it.
template <typename T>
SampleRnn<T> load_checkpoint(const std::filesystem::path& path,
                             const ModelSpec* expected = nullptr);

/// Copies parameters between precisions (shapes must agree).
template <typename To, typename From>
void copy_params(const SampleRnn<From>& from, SampleRnn<To>& to);

}  // namespace samplernn::model
