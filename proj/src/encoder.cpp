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

#include "samplernn/encoder.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <random>

#include "samplernn/container.hpp"
#include "samplernn/dsp.hpp"
#include "samplernn/error.hpp"
#include "samplernn/nn.hpp"

namespace samplernn::embeddings {

namespace {

constexpr std::string_view kEncoderMagic = "SRNNCENC";
constexpr std::uint32_t kEncoderVersion = 1;

using Mat = Eigen::MatrixXf;
using StridedMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

// Columns are the receptive windows of each output step: window t starts at
// input column t * stride and, with channel-major storage, is contiguous.
StridedMap windows(const Mat& input, int kernel, int stride, Eigen::Index steps) {
  return StridedMap(input.data(), kernel * input.rows(), steps,
                    Eigen::OuterStride<>(stride * input.rows()));
}

Eigen::Index output_steps(Eigen::Index in, int kernel, int stride) {
  return in < kernel ? 0 : (in - kernel) / stride + 1;
}

struct Head {
  Mat w1, b1, w2, b2;
};

}  // namespace

std::vector<ConvLayerSpec> default_conv_layers() {
  return {{10, 5, 32}, {8, 4, 64}, {4, 2, 64}, {4, 2, 64}, {4, 2, kEmbeddingSize}};
}

std::string to_string(Worker w) {
  switch (w) {
    case Worker::kWaveform: return "waveform";
    case Worker::kLogPowerSpectrum: return "lps";
    case Worker::kMfcc: return "mfcc";
  }
  return "?";
}

Worker worker_from_string(const std::string& s) {
  if (s == "waveform") return Worker::kWaveform;
  if (s == "lps" || s == "log-power-spectrum") return Worker::kLogPowerSpectrum;
  if (s == "mfcc") return Worker::kMfcc;
  throw UsageError("unknown encoder worker '" + s + "'");
}

int worker_target_dim(Worker w) {
  switch (w) {
    case Worker::kWaveform: return kEncoderHop;
    case Worker::kLogPowerSpectrum: return 257;
    case Worker::kMfcc: return 20;
  }
  return 0;
}

Eigen::MatrixXd worker_targets(Worker w, std::span<const double> samples) {
  const auto count = encoder_frame_count(static_cast<std::int64_t>(samples.size()));
  Eigen::MatrixXd out(worker_target_dim(w), count);
  switch (w) {
    case Worker::kWaveform:
      for (std::int64_t n = 0; n < count; ++n) {
        for (int i = 0; i < kEncoderHop; ++i) out(i, n) = samples[n * kEncoderHop + i];
      }
      break;
    case Worker::kLogPowerSpectrum: {
      const auto window = dsp::hamming_window(400);
      for (std::int64_t n = 0; n < count; ++n) {
        const auto frame = dsp::centered_frame(samples, n * kEncoderHop + kEncoderHop / 2, 400);
        const auto power = dsp::power_spectrum(frame, window, 512);
        for (int b = 0; b < 257; ++b) out(b, n) = std::log(power[b] + 1e-10);
      }
      break;
    }
    case Worker::kMfcc: {
      dsp::SpectralConfig cfg;
      cfg.hop = kEncoderHop;
      cfg.num_coeffs = 20;
      out = dsp::mel_cepstra(samples, cfg).leftCols(count);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

ConvEncoder::ConvEncoder(std::vector<ConvLayerSpec> layers, std::uint64_t seed)
    : layers_(std::move(layers)) {
  if (layers_.empty()) throw UsageError("encoder needs at least one layer");
  std::mt19937_64 rng(seed);
  int cin = 1;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    if (spec.kernel <= 0 || spec.stride <= 0 || spec.channels <= 0) {
      throw UsageError("encoder layer sizes must be positive");
    }
    const int fan_in = spec.kernel * cin;
    const bool last = l + 1 == layers_.size();
    Mat w(spec.channels, fan_in);
    nn::normal_init(w, std::sqrt((last ? 1.0 : 2.0) / fan_in), rng);
    weights_.push_back(std::move(w));
    biases_.push_back(Mat::Zero(spec.channels, 1));
    cin = spec.channels;
  }
  if (decimation() != kEncoderHop) {
    throw UsageError("encoder strides must multiply to " + std::to_string(kEncoderHop));
  }
}

int ConvEncoder::receptive_field() const {
  int rf = 1;
  int jump = 1;
  for (const auto& l : layers_) {
    rf += (l.kernel - 1) * jump;
    jump *= l.stride;
  }
  return rf;
}

int ConvEncoder::decimation() const {
  int d = 1;
  for (const auto& l : layers_) d *= l.stride;
  return d;
}

ConvEncoder::Activations ConvEncoder::forward(std::span<const double> samples) const {
  const auto n = static_cast<Eigen::Index>(samples.size());
  const int left = pad_left();
  const int right = receptive_field();
  Activations acts;
  Mat x = Mat::Zero(1, left + n + right);
  for (Eigen::Index i = 0; i < n; ++i) x(0, left + i) = static_cast<float>(samples[i]);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    const Eigen::Index steps = output_steps(x.cols(), spec.kernel, spec.stride);
    Mat pre = weights_[l] * windows(x, spec.kernel, spec.stride, steps);
    pre.colwise() += biases_[l].col(0);
    acts.inputs.push_back(std::move(x));
    x = l + 1 == layers_.size() ? pre : Mat(pre.cwiseMax(0.0f));
    acts.pre.push_back(std::move(pre));
  }
  const Eigen::Index frames = n / kEncoderHop;
  if (x.cols() < frames) throw NumericalError("encoder padding too small");
  acts.output = x.leftCols(frames);
  return acts;
}

void ConvEncoder::backward(const Activations& acts, const Mat& d_output,
                           std::vector<Mat>& d_weights, std::vector<Mat>& d_biases) const {
  Mat d = Mat::Zero(acts.pre.back().rows(), acts.pre.back().cols());
  d.leftCols(d_output.cols()) = d_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& spec = layers_[l];
    const Mat& input = acts.inputs[l];
    const Eigen::Index steps = d.cols();
    d_weights[l].noalias() += d * windows(input, spec.kernel, spec.stride, steps).transpose();
    d_biases[l] += d.rowwise().sum();
    if (l == 0) break;
    const Mat dw = weights_[l].transpose() * d;
    Mat d_in = Mat::Zero(input.rows(), input.cols());
    const Eigen::Index span = spec.kernel * input.rows();
    for (Eigen::Index t = 0; t < steps; ++t) {
      Eigen::Map<Eigen::VectorXf>(d_in.data() + t * spec.stride * input.rows(), span) += dw.col(t);
    }
    d = d_in.cwiseProduct((acts.pre[l - 1].array() > 0.0f).cast<float>().matrix());
  }
}

EncoderFrames ConvEncoder::encode(const audio::WaveformClip& clip) const {
  if (static_cast<std::int64_t>(clip.samples.size()) < min_samples()) {
    throw DataError("clip '" + clip.utterance_id + "' is shorter than one encoder hop");
  }
  EncoderFrames out;
  out.frames = forward(clip.samples).output.cast<double>();
  return out;
}

void ConvEncoder::save(const std::filesystem::path& path) const {
  BinaryWriter w(path, kEncoderMagic, kEncoderVersion);
  w.u32(static_cast<std::uint32_t>(layers_.size()));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    w.i64(layers_[l].kernel);
    w.i64(layers_[l].stride);
    w.i64(layers_[l].channels);
    const Eigen::MatrixXd wd = weights_[l].cast<double>();
    const Eigen::MatrixXd bd = biases_[l].cast<double>();
    w.f64s(std::span<const double>(wd.data(), static_cast<std::size_t>(wd.size())));
    w.f64s(std::span<const double>(bd.data(), static_cast<std::size_t>(bd.size())));
  }
  w.close();
}

ConvEncoder ConvEncoder::load(const std::filesystem::path& path) {
  BinaryReader r(path, kEncoderMagic, kEncoderVersion);
  const std::uint32_t n = r.u32();
  if (n == 0 || n > 64) throw DataError(path.string() + ": implausible encoder layer count");
  std::vector<ConvLayerSpec> layers;
  std::vector<std::vector<double>> ws, bs;
  for (std::uint32_t l = 0; l < n; ++l) {
    ConvLayerSpec s;
    s.kernel = static_cast<int>(r.i64());
    s.stride = static_cast<int>(r.i64());
    s.channels = static_cast<int>(r.i64());
    layers.push_back(s);
    ws.push_back(r.f64s());
    bs.push_back(r.f64s());
  }
  ConvEncoder enc(layers, 0);
  for (std::uint32_t l = 0; l < n; ++l) {
    if (static_cast<Eigen::Index>(ws[l].size()) != enc.weights_[l].size() ||
        static_cast<Eigen::Index>(bs[l].size()) != enc.biases_[l].size()) {
      throw DataError(path.string() + ": encoder layer " + std::to_string(l) + " has the wrong size");
    }
    enc.weights_[l] = Eigen::Map<const Eigen::MatrixXd>(ws[l].data(), enc.weights_[l].rows(),
                                                        enc.weights_[l].cols())
                          .cast<float>();
    enc.biases_[l] =
        Eigen::Map<const Eigen::MatrixXd>(bs[l].data(), enc.biases_[l].rows(), 1).cast<float>();
  }
  return enc;
}

// ---------------------------------------------------------------------------
// Worker training

EncoderTrainReport train_encoder(ConvEncoder& encoder,
                                 std::span<const audio::WaveformClip> corpus,
                                 const EncoderTrainConfig& config) {
  if (config.workers.empty()) throw UsageError("encoder training needs at least one worker");
  if (config.chunk_samples < kEncoderHop) throw UsageError("encoder chunk is too short");
  const std::size_t nw = config.workers.size();
  std::mt19937_64 rng(config.seed);

  struct Chunk {
    Eigen::VectorXd samples;
    std::vector<Mat> targets;
  };
  auto make_chunk = [&](const audio::WaveformClip& clip, std::int64_t offset) {
    Chunk c;
    const std::span<const double> s(clip.samples.data() + offset,
                                    static_cast<std::size_t>(config.chunk_samples));
    c.samples = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    for (Worker w : config.workers) {
      const Eigen::MatrixXd t = worker_targets(w, s);
      if (!t.allFinite()) throw NumericalError("non-finite " + to_string(w) + " target");
      c.targets.push_back(t.cast<float>());
    }
    return c;
  };

  std::vector<std::size_t> usable;
  EncoderTrainReport report;
  report.workers = config.workers;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& clip = corpus[i];
    if (clip.sample_rate != audio::kSampleRate ||
        static_cast<std::int64_t>(clip.samples.size()) < config.chunk_samples) {
      spdlog::info("encoder training: skipping '{}' (too short or wrong rate)", clip.utterance_id);
      ++report.skipped_utterances;
      continue;
    }
    try {
      make_chunk(clip, 0);
      usable.push_back(i);
    } catch (const Error& e) {
      spdlog::warn("encoder training: skipping '{}': {}", clip.utterance_id, e.what());
      ++report.skipped_utterances;
    }
  }
  if (usable.empty()) throw DataError("encoder training: no usable utterances");

  auto random_chunk = [&]() {
    std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
    const auto& clip = corpus[usable[pick(rng)]];
    std::uniform_int_distribution<std::int64_t> off(
        0, static_cast<std::int64_t>(clip.samples.size()) - config.chunk_samples);
    return make_chunk(clip, off(rng));
  };

  // Fixed probe chunks measure progress; they also provide target statistics.
  std::vector<Chunk> probe;
  for (int i = 0; i < 8; ++i) probe.push_back(random_chunk());
  std::vector<Eigen::VectorXf> mean(nw), inv_std(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    Eigen::Index total = 0;
    const int dim = worker_target_dim(config.workers[w]);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(dim), s2 = Eigen::VectorXd::Zero(dim);
    for (const auto& c : probe) {
      const Eigen::MatrixXd t = c.targets[w].cast<double>();
      s += t.rowwise().sum();
      s2 += t.cwiseProduct(t).rowwise().sum();
      total += t.cols();
    }
    const Eigen::VectorXd m = s / static_cast<double>(total);
    const Eigen::VectorXd var = (s2 / static_cast<double>(total) - m.cwiseProduct(m)).cwiseMax(0.0);
    mean[w] = m.cast<float>();
    inv_std[w] = (var.array().sqrt() + 1e-6).inverse().matrix().cast<float>();
  }
  auto normalize = [&](Chunk& c) {
    for (std::size_t w = 0; w < nw; ++w) {
      c.targets[w].colwise() -= mean[w];
      c.targets[w].array().colwise() *= inv_std[w].array();
    }
  };
  for (auto& c : probe) normalize(c);

  std::vector<Head> heads(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    auto& h = heads[w];
    const int dim = worker_target_dim(config.workers[w]);
    h.w1.resize(config.worker_hidden, encoder.dim());
    h.b1 = Mat::Zero(config.worker_hidden, 1);
    h.w2.resize(dim, config.worker_hidden);
    h.b2 = Mat::Zero(dim, 1);
    nn::normal_init(h.w1, std::sqrt(2.0 / encoder.dim()), rng);
    nn::normal_init(h.w2, std::sqrt(1.0 / config.worker_hidden), rng);
  }

  std::vector<nn::NamedTensor<float>> params, grads;
  std::vector<Mat> dw(encoder.weights().size()), db(encoder.biases().size());
  std::vector<Head> dheads(nw);
  for (std::size_t l = 0; l < dw.size(); ++l) {
    params.push_back({"w" + std::to_string(l), &encoder.weights()[l]});
    params.push_back({"b" + std::to_string(l), &encoder.biases()[l]});
    grads.push_back({"w" + std::to_string(l), &dw[l]});
    grads.push_back({"b" + std::to_string(l), &db[l]});
  }
  for (std::size_t w = 0; w < nw; ++w) {
    for (auto [p, g] : {std::pair{&heads[w].w1, &dheads[w].w1}, std::pair{&heads[w].b1, &dheads[w].b1},
                        std::pair{&heads[w].w2, &dheads[w].w2}, std::pair{&heads[w].b2, &dheads[w].b2}}) {
      params.push_back({"head", p});
      grads.push_back({"head", g});
    }
  }

  // Returns per-worker losses; accumulates gradients when `train` is set.
  auto run = [&](const Chunk& c, bool train) {
    const auto acts = encoder.forward(std::span<const double>(c.samples.data(), c.samples.size()));
    const Mat& z = acts.output;
    Mat dz = Mat::Zero(z.rows(), z.cols());
    std::vector<double> losses(nw);
    for (std::size_t w = 0; w < nw; ++w) {
      const auto& h = heads[w];
      const Mat a = ((h.w1 * z).colwise() + h.b1.col(0)).cwiseMax(0.0f);
      const Mat y = (h.w2 * a).colwise() + h.b2.col(0);
      const Mat diff = y - c.targets[w];
      losses[w] = static_cast<double>(diff.squaredNorm()) / static_cast<double>(diff.size());
      if (!train) continue;
      const Mat dy = diff * (2.0f / static_cast<float>(diff.size()));
      auto& g = dheads[w];
      g.w2.noalias() += dy * a.transpose();
      g.b2 += dy.rowwise().sum();
      Mat da = h.w2.transpose() * dy;
      da.array() *= (a.array() > 0.0f).cast<float>();
      g.w1.noalias() += da * z.transpose();
      g.b1 += da.rowwise().sum();
      dz.noalias() += h.w1.transpose() * da;
    }
    if (train) encoder.backward(acts, dz, dw, db);
    return losses;
  };
  auto probe_loss = [&]() {
    std::vector<double> total(nw, 0.0);
    for (const auto& c : probe) {
      const auto l = run(c, false);
      for (std::size_t w = 0; w < nw; ++w) total[w] += l[w] / probe.size();
    }
    return total;
  };

  report.initial_loss = probe_loss();
  nn::Adam<float> adam;
  for (int step = 0; step < config.steps; ++step) {
    for (std::size_t l = 0; l < dw.size(); ++l) {
      dw[l] = Mat::Zero(encoder.weights()[l].rows(), encoder.weights()[l].cols());
      db[l] = Mat::Zero(encoder.biases()[l].rows(), 1);
    }
    for (std::size_t w = 0; w < nw; ++w) {
      dheads[w].w1 = Mat::Zero(heads[w].w1.rows(), heads[w].w1.cols());
      dheads[w].b1 = Mat::Zero(heads[w].b1.rows(), 1);
      dheads[w].w2 = Mat::Zero(heads[w].w2.rows(), heads[w].w2.cols());
      dheads[w].b2 = Mat::Zero(heads[w].b2.rows(), 1);
    }
    double loss = 0.0;
    for (int b = 0; b < config.chunks_per_step; ++b) {
      Chunk c = random_chunk();
      normalize(c);
      for (double l : run(c, true)) loss += l / config.chunks_per_step;
    }
    for (auto& g : grads) *g.tensor /= static_cast<float>(config.chunks_per_step);
    if (!std::isfinite(loss)) throw NumericalError("encoder training diverged at step " + std::to_string(step));
    adam.step(params, grads, config.learning_rate);
    if (config.log_every > 0 && (step + 1) % config.log_every == 0) {
      spdlog::info("encoder step {}/{}: worker loss {:.4f}", step + 1, config.steps, loss);
    }
  }
  report.final_loss = probe_loss();
  for (std::size_t w = 0; w < nw; ++w) {
    spdlog::info("encoder worker {}: probe loss {:.4f} -> {:.4f}", to_string(config.workers[w]),
                 report.initial_loss[w], report.final_loss[w]);
  }
  return report;
}

}  // namespace samplernn::embeddings
