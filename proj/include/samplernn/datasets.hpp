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

// Corpus catalog and the base/adaptation speaker split.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "samplernn/audio.hpp"

namespace samplernn::datasets {

struct UtteranceEntry {
  std::string id;
  std::filesystem::path wav;
  std::filesystem::path labels;
  double duration = 0.0;  // seconds, after silence trimming
};

struct SpeakerEntry {
  std::string id;
  std::string gender;
  std::string corpus;
  std::vector<UtteranceEntry> utterances;

  double total_duration() const;
};

struct CorpusCatalog {
  std::vector<SpeakerEntry> speakers;  // sorted by id
  std::vector<std::string> skipped;    // "<path>: reason"

  double total_duration() const;
  const SpeakerEntry& speaker(const std::string& id) const;
  const UtteranceEntry& utterance(const std::string& speaker, const std::string& id) const;
};

/// Measures the post-trimming duration of one recording, in seconds.
using DurationProbe = std::function<double(const std::filesystem::path& wav)>;

double trimmed_duration(const std::filesystem::path& wav, const audio::VadConfig& vad = {});

/// Scans `<root>/speakers.tsv` (speaker, gender) and `<root>/<speaker>/*.wav`.
/// Recordings without a matching `.lab` file, and unreadable recordings, are
/// listed in `skipped`.
CorpusCatalog build_catalog(std::span<const std::filesystem::path> roots,
                            const DurationProbe& probe = {});

enum class Split { kTrain, kValidation, kTest, kSeedPool, kAdaptTest };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct SplitTargets {
  double validation_seconds = 45.0;
  double test_seconds = 45.0;
  double adapt_test_seconds = 180.0;
  double seed_pool_seconds = 120.0;

  /// All targets multiplied by `factor` (desk-scale corpora).
  SplitTargets scaled(double factor) const;
  bool operator==(const SplitTargets&) const = default;
};

struct Assignment {
  std::string speaker;
  std::string utterance;
  Split split = Split::kTrain;
  double duration = 0.0;

  bool operator==(const Assignment&) const = default;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  SplitTargets targets;
  std::vector<std::string> base_speakers;        // sorted
  std::vector<std::string> adaptation_speakers;  // sorted
  std::map<std::string, std::string> gender;
  std::vector<Assignment> assignments;           // sorted by speaker, utterance

  std::vector<Assignment> select(Split split) const;
  std::vector<Assignment> select(const std::string& speaker, Split split) const;
  double seconds(const std::string& speaker, Split split) const;

  void save(const std::filesystem::path& path) const;
  static SplitPlan load(const std::filesystem::path& path);
  bool operator==(const SplitPlan&) const = default;
};

/// Base speakers: the `n_per_gender` speakers of each gender with the most
/// speech. Adaptation speakers: `n_adapt_per_gender` random picks per gender
/// among the remaining speakers with enough speech for a seed pool and a test
/// set. Targets are met at utterance granularity by greedy accumulation over a
/// seeded shuffle.
SplitPlan make_split_plan(const CorpusCatalog& catalog, int n_per_gender = 20,
                          int n_adapt_per_gender = 5, std::uint64_t seed = 1,
                          const SplitTargets& targets = {});

}  // namespace samplernn::datasets
