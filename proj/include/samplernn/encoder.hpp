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

// Small trainable convolutional speech encoder (strided 1-D stack, overall
// decimation 160) with self-supervised regression workers.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "samplernn/embeddings.hpp"

namespace samplernn::embeddings {

struct ConvLayerSpec {
  int kernel = 0;
  int stride = 0;
  int channels = 0;
};

std::vector<ConvLayerSpec> default_conv_layers();

enum class Worker { kWaveform, kLogPowerSpectrum, kMfcc };

std::string to_string(Worker w);
Worker worker_from_string(const std::string& s);
/// Target dimension regressed by each worker head.
int worker_target_dim(Worker w);
/// Per-frame regression target for a clip, one column per encoder frame.
Eigen::MatrixXd worker_targets(Worker w, std::span<const double> samples);

class ConvEncoder final : public SpeechEncoder {
 public:
  using Mat = Eigen::MatrixXf;

  ConvEncoder(std::vector<ConvLayerSpec> layers, std::uint64_t seed);
  ConvEncoder() : ConvEncoder(default_conv_layers(), 0) {}

  std::string name() const override { return "conv"; }
  int dim() const override { return layers_.back().channels; }
  std::int64_t min_samples() const override { return kEncoderHop; }
  EncoderFrames encode(const audio::WaveformClip& clip) const override;

  int receptive_field() const;
  int decimation() const;
  int pad_left() const { return (receptive_field() - kEncoderHop) / 2; }

  const std::vector<ConvLayerSpec>& layers() const { return layers_; }
  std::vector<Mat>& weights() { return weights_; }
  std::vector<Mat>& biases() { return biases_; }
  const std::vector<Mat>& weights() const { return weights_; }
  const std::vector<Mat>& biases() const { return biases_; }

  struct Activations {
    std::vector<Mat> inputs;  // per layer, channels x time (layer 0: 1 x padded samples)
    std::vector<Mat> pre;     // per layer pre-activation
    Mat output;               // dim x frames
  };
  Activations forward(std::span<const double> samples) const;
  /// Accumulates parameter gradients given d(loss)/d(output).
  void backward(const Activations& acts, const Mat& d_output, std::vector<Mat>& d_weights,
                std::vector<Mat>& d_biases) const;

  void save(const std::filesystem::path& path) const;
  static ConvEncoder load(const std::filesystem::path& path);

 private:
  std::vector<ConvLayerSpec> layers_;
  std::vector<Mat> weights_;  // channels_out x (kernel * channels_in), column = tap * cin + c
  std::vector<Mat> biases_;   // channels_out x 1
};

struct EncoderTrainConfig {
  std::vector<Worker> workers{Worker::kWaveform, Worker::kLogPowerSpectrum, Worker::kMfcc};
  int steps = 400;
  int chunk_samples = 16000;
  int chunks_per_step = 2;
  int worker_hidden = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  int log_every = 50;
};

struct EncoderTrainReport {
  std::vector<Worker> workers;
  std::vector<double> initial_loss;  // per worker, on the held-out probe set
  std::vector<double> final_loss;
  int skipped_utterances = 0;
};

/// Trains the encoder and worker heads on unlabeled clips. Utterances whose
/// targets cannot be extracted are skipped with a log line.
EncoderTrainReport train_encoder(ConvEncoder& encoder, std::span<const audio::WaveformClip> corpus,
                                 const EncoderTrainConfig& config);

}  // namespace samplernn::embeddings
