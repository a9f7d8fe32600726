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

// Command-line workflows over an experiment directory:
// make-corpus -> prepare -> train-encoder -> extract-embeddings -> train ->
// synthesize / evaluate / adapt-curve -> plot.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "samplernn/config.hpp"
#include "samplernn/conditioning.hpp"
#include "samplernn/datasets.hpp"
#include "samplernn/model.hpp"
#include "samplernn/training.hpp"

namespace samplernn::pipeline {

/// Runs one command; returns the process exit code (see ExitCode).
int run_cli(int argc, const char* const* argv);
/// Same, without the program name.
int run_cli(const std::vector<std::string>& args);

/// Full-scale defaults for every configuration key.
KeyValueConfig default_config();
/// Small-model, small-corpus overrides used by `prepare --desk-scale`.
KeyValueConfig desk_scale_overrides();
const std::set<std::string>& known_config_keys();

/// An experiment directory written by `prepare`.
class Experiment {
 public:
  static Experiment open(const std::filesystem::path& manifest_or_dir);

  const std::filesystem::path& dir() const { return dir_; }
  const KeyValueConfig& config() const { return cfg_; }
  std::filesystem::path manifest_path() const { return dir_ / "experiment.cfg"; }
  std::filesystem::path split_path() const { return dir_ / "split.tsv"; }
  std::filesystem::path stats_path() const { return dir_ / "stats.tsv"; }
  std::filesystem::path cache_dir() const { return dir_ / "cache"; }
  std::filesystem::path embeddings_dir() const { return dir_ / "embeddings"; }
  std::filesystem::path encoder_path() const { return dir_ / "encoder.ckpt"; }
  std::filesystem::path run_dir(const training::Variant& v) const { return dir_ / "runs" / v.name(); }

  std::uint64_t seed() const;
  model::ModelConfig model_config() const;
  training::TrainConfig train_config() const;
  conditioning::FeatureSchema schema() const;
  conditioning::FeatureLayout layout() const;  // with logF0/UV
  const datasets::SplitPlan& plan() const;
  const conditioning::SpeakerStats& stats() const;

  /// Cached utterance with frames normalized by its speaker's statistics.
  training::UtteranceData utterance(const std::string& speaker, const std::string& id,
                                    bool f0uv) const;
  audio::WaveformClip trimmed_clip(const std::string& speaker, const std::string& id) const;
  std::vector<training::UtteranceData> split_data(datasets::Split split, bool f0uv,
                                                  bool base_only = true) const;
  std::string speaker_of(const std::string& utterance) const;

 private:
  std::filesystem::path dir_;
  KeyValueConfig cfg_;
  mutable std::optional<datasets::SplitPlan> plan_;
  mutable std::optional<conditioning::SpeakerStats> stats_;
};

}  // namespace samplernn::pipeline
