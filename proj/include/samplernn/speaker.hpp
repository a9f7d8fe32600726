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

#include <Eigen/Dense>

#include <string>
#include <variant>

namespace samplernn {

/// Row of a trained one-hot embedding table.
struct OneHotProvenance {
  int index = 0;
};

/// Time average of encoder frames over a seed signal of `seconds` length.
struct EncoderProvenance {
  std::string seed_id;
  double seconds = 0.0;
};

using Provenance = std::variant<OneHotProvenance, EncoderProvenance>;

/// Speaker identity vector (E = 100 by default) and where it came from.
struct SpeakerEmbedding {
  std::string speaker_id;
  Eigen::VectorXd vector;
  Provenance provenance;

  bool from_table() const { return std::holds_alternative<OneHotProvenance>(provenance); }
};

}  // namespace samplernn
