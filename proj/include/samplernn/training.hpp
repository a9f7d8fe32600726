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

// Teacher-forced training with truncated backpropagation through time,
// validation-plateau learning-rate schedule and the 2x2 variant grid.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samplernn/audio.hpp"
#include "samplernn/config.hpp"
#include "samplernn/frames.hpp"
#include "samplernn/model.hpp"
#include "samplernn/speaker.hpp"

namespace samplernn::training {

struct Variant {
  model::SpeakerMode speaker = model::SpeakerMode::kEncoder;
  bool f0uv = true;

  std::string name() const;  // e.g. "encoder-f0uv"
  static Variant parse(const std::string& s);
  static std::vector<Variant> grid();
  bool operator==(const Variant&) const = default;
};

struct TrainConfig {
  int batch_size = 128;
  double initial_learning_rate = 1e-4;
  int patience = 3;
  double scale_factor = 0.5;
  int epochs = 50;
  double plateau_threshold = 1e-4;
  std::uint64_t seed = 1;
  /// Caps on windows per epoch / per validation pass; 0 means no cap.
  int max_train_windows = 0;
  int max_validation_windows = 0;

  static TrainConfig from_config(const KeyValueConfig& cfg);
  void to_config(KeyValueConfig& cfg) const;
};

/// Halves the learning rate after `patience` consecutive validations that fail
/// to improve on the best value by at least `threshold`.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor, double threshold);

  /// Records one validation loss; returns true when the rate was reduced.
  bool observe(double validation_loss);
  double lr() const { return lr_; }
  double best() const { return best_; }
  int bad_epochs() const { return bad_; }
  /// True when the last observation was an improvement.
  bool improved() const { return improved_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double threshold_;
  double best_;
  int bad_ = 0;
  bool improved_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_nll = 0.0;  // nats per sample; NaN for the initial evaluation
  double val_nll = 0.0;
  double lr = 0.0;
  double seconds = 0.0;    // wall clock, not written to the CSV
};

struct RunLog {
  std::string variant;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;

  double best_val_nll() const;
  /// epoch,train_nll,val_nll,lr (values in nats/sample).
  std::string to_csv() const;
  static RunLog from_csv(const std::string& text);
};

/// One utterance ready for windowing: mu-law codes plus normalized frames.
struct UtteranceData {
  std::string speaker;
  std::string utterance;
  audio::QuantizedSequence codes;
  std::vector<ConditioningFrame> frames;
};

/// Mean teacher-forced NLL in nats/sample over all windows of `utterances`,
/// with recurrent state carried across each utterance's windows.
template <typename T>
double evaluate_nll(const model::SampleRnn<T>& model, std::span<const UtteranceData> utterances,
                    const std::map<std::string, SpeakerEmbedding>& embeddings,
                    int max_windows = 0);

struct TrainHooks {
  /// Called after each epoch (including the initial evaluation, epoch 0).
  std::function<void(int epoch, const model::SampleRnn<float>&)> on_epoch;
};

/// Trains in place. Every epoch writes `<out>/last.ckpt`; improvements write
/// `<out>/best.ckpt`; the run log goes to `<out>/runlog.csv`. A non-finite loss
/// aborts with NumericalError after restoring the last good checkpoint.
RunLog train(model::SampleRnn<float>& model, std::span<const UtteranceData> train_set,
             std::span<const UtteranceData> validation_set,
             const std::map<std::string, SpeakerEmbedding>& embeddings, const TrainConfig& config,
             const std::filesystem::path& out_dir, const TrainHooks& hooks = {});

/// Builds the model spec for a variant.
model::ModelSpec variant_spec(const Variant& v, const model::ModelConfig& config,
                              const conditioning::FeatureLayout& layout_with_f0uv,
                              std::span<const std::string> training_speakers);

/// Speaker embeddings for a variant: table entries for one-hot models, cached
/// encoder embeddings otherwise (missing entries are an error).
std::map<std::string, SpeakerEmbedding> variant_embeddings(
    const Variant& v, std::span<const std::string> training_speakers,
    const std::map<std::string, SpeakerEmbedding>& cached);

struct GridInputs {
  model::ModelConfig model_config;
  conditioning::FeatureLayout layout;  // with logF0/UV
  std::vector<std::string> speakers;   // training speakers, table order
  std::vector<UtteranceData> train;    // frames include logF0/UV
  std::vector<UtteranceData> validation;
  std::map<std::string, SpeakerEmbedding> encoder_embeddings;
};

/// Trains all four variants with shared data and seeds under `<out>/<variant>`.
std::vector<RunLog> run_grid(const GridInputs& inputs, const TrainConfig& config,
                             const std::filesystem::path& out_dir,
                             std::span<const Variant> variants = {});

/// Drops logF0/UV from every utterance's frames.
std::vector<UtteranceData> without_f0uv(std::span<const UtteranceData> data,
                                        const conditioning::FeatureLayout& layout);

}  // namespace samplernn::training
