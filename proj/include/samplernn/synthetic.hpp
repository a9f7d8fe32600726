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

// Formant-synthesized speech-like corpus with aligned labels, for desk-scale
// runs and tests. Each speaker has its own pitch, vocal-tract scale and
// spectral tilt; phones are vowels, nasals, approximants, fricatives, plosives
// and silences.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "samplernn/audio.hpp"
#include "samplernn/conditioning.hpp"

namespace samplernn::synthetic {

inline constexpr int kPhoneVocab = 64;

struct Voice {
  std::string speaker_id;
  std::string gender;
  double f0_hz = 120.0;
  double formant_scale = 1.0;
  double tilt = 0.9;         // glottal low-pass pole
  double breathiness = 0.02;
  double rate = 1.0;         // speaking-rate multiplier on phone durations
};

/// Draws a voice typical of `gender` ("f" or "m").
Voice random_voice(const std::string& speaker_id, const std::string& gender, std::uint64_t seed);

struct Utterance {
  audio::WaveformClip clip;
  std::vector<conditioning::PhonemeAnnotation> labels;
};

/// Roughly `seconds` long (whole phones), with leading and trailing silence
/// unless `continuous` is set.
Utterance synthesize_utterance(const Voice& voice, const std::string& utterance_id, double seconds,
                               std::uint64_t seed, bool continuous = false);

struct SpeakerPlan {
  Voice voice;
  double seconds = 60.0;
};

struct CorpusSpec {
  std::vector<SpeakerPlan> speakers;
  double utterance_seconds = 4.0;
  std::uint64_t seed = 1;
};

/// Base and adaptation speakers for a corpus with `per_gender` speakers of each
/// gender in each group.
CorpusSpec desk_corpus_spec(int base_per_gender, double base_seconds, int adapt_per_gender,
                            double adapt_seconds, std::uint64_t seed,
                            const std::string& prefix = "syn");

/// Writes `<root>/speakers.tsv`, `<root>/schema.txt` and
/// `<root>/<speaker>/<utt>.{wav,lab}`.
void write_corpus(const std::filesystem::path& root, const CorpusSpec& spec);

}  // namespace samplernn::synthetic
