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

#include "samplernn/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "samplernn/container.hpp"
#include "samplernn/error.hpp"

namespace samplernn::model {

namespace {

constexpr std::string_view kCheckpointMagic = "SRNNCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

const std::array<double, 256>& decode_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = audio::mulaw_decode_sample(static_cast<audio::Code>(i));
    return t;
  }();
  return table;
}

// Column-wise log-softmax, in place.
template <typename T>
void log_softmax_columns(nn::Matrix<T>& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    auto col = m.col(j);
    const T mx = col.maxCoeff();
    const T lse = mx + std::log((col.array() - mx).exp().sum());
    col.array() -= lse;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw UsageError(std::string("model config: ") + what + " must be positive");
  };
  positive(frame_size, "frame size");
  positive(seq_len, "sequence length");
  positive(hidden_size, "hidden size");
  positive(speaker_embedding_size, "speaker embedding size");
  positive(global_features_size, "global features size");
  positive(categorical_embedding_size, "categorical embedding size");
  positive(sample_order, "sample-level order");
  positive(code_embedding_size, "code embedding size");
  if (quantization_levels != 256) throw UsageError("model config: only 8-bit mu-law is supported");
  if (ratios.empty()) throw UsageError("model config: at least one frame tier is required");
  long product = 1;
  for (int r : ratios) {
    positive(r, "upsampling ratio");
    product *= r;
  }
  if (product != frame_size) {
    throw UsageError("model config: upsampling ratios multiply to " + std::to_string(product) +
                     ", expected frame size " + std::to_string(frame_size));
  }
  if (sample_order > frame_size) {
    throw UsageError("model config: sample-level order exceeds the frame size");
  }
}

std::vector<int> ModelConfig::tier_frame_sizes() const {
  std::vector<int> sizes;
  int fs = frame_size;
  for (int r : ratios) {
    sizes.push_back(fs);
    fs /= r;
  }
  return sizes;
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& cfg) {
  ModelConfig c;
  c.frame_size = cfg.get_int("top_frame_level_input_size", c.frame_size);
  c.seq_len = cfg.get_int("top_frame_level_seq_length", c.seq_len);
  c.ratios = cfg.get_int_list("upsampling_ratios", c.ratios);
  c.hidden_size = cfg.get_int("gru_hidden_size", c.hidden_size);
  c.speaker_embedding_size = cfg.get_int("speaker_embedding_size", c.speaker_embedding_size);
  c.global_features_size = cfg.get_int("global_features_size", c.global_features_size);
  c.categorical_embedding_size = cfg.get_int("categorical_linguistic_features_embedding_size",
                                             c.categorical_embedding_size);
  const int bits = cfg.get_int("speech_quantization_bits", 8);
  if (bits < 1 || bits > 16) throw UsageError("speech_quantization_bits out of range");
  c.quantization_levels = 1 << bits;
  c.sample_order = cfg.get_int("sample_level_order", c.sample_order);
  c.code_embedding_size = cfg.get_int("code_embedding_size", c.code_embedding_size);
  c.validate();
  return c;
}

void ModelConfig::to_config(KeyValueConfig& cfg) const {
  cfg.set("top_frame_level_input_size", std::to_string(frame_size));
  cfg.set("top_frame_level_seq_length", std::to_string(seq_len));
  cfg.set("upsampling_ratios", join_ints(ratios));
  cfg.set("gru_hidden_size", std::to_string(hidden_size));
  cfg.set("speaker_embedding_size", std::to_string(speaker_embedding_size));
  cfg.set("global_features_size", std::to_string(global_features_size));
  cfg.set("categorical_linguistic_features_embedding_size",
          std::to_string(categorical_embedding_size));
  int bits = 0;
  while ((1 << bits) < quantization_levels) ++bits;
  cfg.set("speech_quantization_bits", std::to_string(bits));
  cfg.set("sample_level_order", std::to_string(sample_order));
  cfg.set("code_embedding_size", std::to_string(code_embedding_size));
}

std::string to_string(SpeakerMode mode) {
  return mode == SpeakerMode::kOneHotTable ? "onehot" : "encoder";
}

SpeakerMode speaker_mode_from_string(const std::string& s) {
  if (s == "onehot" || s == "one-hot" || s == "table") return SpeakerMode::kOneHotTable;
  if (s == "encoder") return SpeakerMode::kEncoder;
  throw UsageError("unknown speaker mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
std::vector<nn::NamedTensor<T>> SampleRnn<T>::Params::named() {
  std::vector<nn::NamedTensor<T>> out;
  for (std::size_t i = 0; i < categorical_embeddings.size(); ++i) {
    out.push_back({"categorical_embedding." + std::to_string(i), &categorical_embeddings[i]});
  }
  out.push_back({"speaker_table", &speaker_table});
  out.push_back({"w_cond", &w_cond});
  out.push_back({"b_cond", &b_cond});
  for (std::size_t k = 0; k < tiers.size(); ++k) {
    const std::string p = "tier" + std::to_string(k) + ".";
    auto& t = tiers[k];
    out.push_back({p + "w_in", &t.w_in});
    out.push_back({p + "b_in", &t.b_in});
    out.push_back({p + "w_ih", &t.w_ih});
    out.push_back({p + "b_ih", &t.b_ih});
    out.push_back({p + "w_hh", &t.w_hh});
    out.push_back({p + "b_hh", &t.b_hh});
    out.push_back({p + "h0", &t.h0});
    out.push_back({p + "w_up", &t.w_up});
    out.push_back({p + "b_up", &t.b_up});
  }
  out.push_back({"code_embedding", &code_embedding});
  out.push_back({"w_sample_in", &w_sample_in});
  out.push_back({"w_sample_cond", &w_sample_cond});
  out.push_back({"b_sample1", &b_sample1});
  out.push_back({"w_sample2", &w_sample2});
  out.push_back({"b_sample2", &b_sample2});
  out.push_back({"w_out", &w_out});
  out.push_back({"b_out", &b_out});
  return out;
}

template <typename T>
std::vector<nn::NamedTensor<T>> SampleRnn<T>::Params::named() const {
  return const_cast<Params*>(this)->named();
}

template <typename T>
typename SampleRnn<T>::Params SampleRnn<T>::Params::zeros_like() const {
  Params z = *this;
  z.set_zero();
  return z;
}

template <typename T>
void SampleRnn<T>::Params::set_zero() {
  for (auto& t : named()) t.tensor->setZero();
}

// ---------------------------------------------------------------------------
// Construction

template <typename T>
SampleRnn<T>::SampleRnn(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  const auto& c = spec_.config;
  c.validate();
  if (spec_.speaker_mode == SpeakerMode::kOneHotTable && spec_.speakers.empty()) {
    throw UsageError("one-hot speaker mode needs at least one training speaker");
  }
  for (int v : spec_.layout.categorical_vocab) {
    if (v <= 0) throw UsageError("categorical vocabulary sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  const int H = c.hidden_size;
  const int E = c.speaker_embedding_size;
  const int C = c.global_features_size;
  const int nc = spec_.layout.num_categorical();
  const int expanded = nc * c.categorical_embedding_size + (spec_.layout.dim() - nc);
  auto linear = [&](Mat& w, Mat& b, int out, int in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    w.resize(out, in);
    b.resize(out, 1);
    nn::uniform_init(w, bound, rng);
    nn::uniform_init(b, bound, rng);
  };

  auto& p = params_;
  for (int v : spec_.layout.categorical_vocab) {
    Mat emb(c.categorical_embedding_size, v);
    nn::normal_init(emb, 1.0, rng);
    p.categorical_embeddings.push_back(std::move(emb));
  }
  const int table_cols =
      spec_.speaker_mode == SpeakerMode::kOneHotTable ? static_cast<int>(spec_.speakers.size()) : 0;
  p.speaker_table.resize(E, table_cols);
  nn::normal_init(p.speaker_table, 1.0, rng);
  linear(p.w_cond, p.b_cond, C, E + expanded);

  const auto sizes = c.tier_frame_sizes();
  for (int k = 0; k < c.num_tiers(); ++k) {
    Tier t;
    linear(t.w_in, t.b_in, H, sizes[k] + C);
    const double gru_bound = 1.0 / std::sqrt(static_cast<double>(H));
    t.w_ih.resize(3 * H, H);
    t.b_ih.resize(3 * H, 1);
    t.w_hh.resize(3 * H, H);
    t.b_hh.resize(3 * H, 1);
    nn::uniform_init(t.w_ih, gru_bound, rng);
    nn::uniform_init(t.b_ih, gru_bound, rng);
    nn::uniform_init(t.w_hh, gru_bound, rng);
    nn::uniform_init(t.b_hh, gru_bound, rng);
    t.h0.resize(H, 1);
    nn::uniform_init(t.h0, 0.1, rng);
    linear(t.w_up, t.b_up, c.ratios[k] * H, H);
    p.tiers.push_back(std::move(t));
  }
  p.code_embedding.resize(c.code_embedding_size, c.quantization_levels);
  nn::normal_init(p.code_embedding, 1.0, rng);
  Mat unused_bias;
  linear(p.w_sample_in, p.b_sample1, H, c.sample_order * c.code_embedding_size);
  linear(p.w_sample_cond, unused_bias, H, C);
  linear(p.w_sample2, p.b_sample2, H, H);
  linear(p.w_out, p.b_out, c.quantization_levels, H);
}

template <typename T>
typename SampleRnn<T>::State SampleRnn<T>::initial_state() const {
  State s;
  for (const auto& t : params_.tiers) s.hidden.push_back(t.h0.col(0));
  s.fresh = true;
  return s;
}

// ---------------------------------------------------------------------------
// Conditioning

template <typename T>
typename SampleRnn<T>::Vec SampleRnn<T>::speaker_vector(const SpeakerEmbedding& e) const {
  const int E = config().speaker_embedding_size;
  if (e.from_table()) {
    if (spec_.speaker_mode != SpeakerMode::kOneHotTable) {
      throw DataError("speaker '" + e.speaker_id +
                      "': table embedding given to an encoder-conditioned model");
    }
    const int index = std::get<OneHotProvenance>(e.provenance).index;
    if (index < 0 || index >= params_.speaker_table.cols()) {
      throw DataError("speaker '" + e.speaker_id + "': table index " + std::to_string(index) +
                      " outside the trained table of " +
                      std::to_string(params_.speaker_table.cols()) + " speakers");
    }
    return params_.speaker_table.col(index);
  }
  if (spec_.speaker_mode != SpeakerMode::kEncoder) {
    throw DataError("speaker '" + e.speaker_id +
                    "': encoder embedding given to a one-hot conditioned model");
  }
  if (e.vector.size() != E) {
    throw DataError("speaker '" + e.speaker_id + "': embedding has dimension " +
                    std::to_string(e.vector.size()) + ", expected " + std::to_string(E));
  }
  return e.vector.cast<T>();
}

template <typename T>
SpeakerEmbedding SampleRnn<T>::table_embedding(int index) const {
  if (spec_.speaker_mode != SpeakerMode::kOneHotTable || index < 0 ||
      index >= params_.speaker_table.cols()) {
    throw DataError("no table embedding with index " + std::to_string(index));
  }
  SpeakerEmbedding e;
  e.speaker_id = spec_.speakers[index];
  e.vector = params_.speaker_table.col(index).template cast<double>();
  e.provenance = OneHotProvenance{index};
  return e;
}

template <typename T>
void SampleRnn<T>::check_frame(const ConditioningFrame& f) const {
  const auto& layout = spec_.layout;
  if (static_cast<int>(f.dim()) != layout.dim()) {
    throw DataError("conditioning frame has dimension " + std::to_string(f.dim()) +
                    ", model expects " + std::to_string(layout.dim()));
  }
  for (int i = 0; i < layout.num_categorical(); ++i) {
    const double v = f.values[i];
    if (!(v >= 0.0) || v != std::floor(v) || v >= layout.categorical_vocab[i]) {
      throw DataError("categorical feature " + std::to_string(i) + " value " +
                      format_double(v) + " outside vocabulary of " +
                      std::to_string(layout.categorical_vocab[i]));
    }
  }
}

template <typename T>
typename SampleRnn<T>::Mat SampleRnn<T>::expand_conditioning(
    const Vec& speaker, std::span<const ConditioningFrame> frames) const {
  const auto& layout = spec_.layout;
  const int E = config().speaker_embedding_size;
  const int Q = config().categorical_embedding_size;
  const int nc = layout.num_categorical();
  const int in = static_cast<int>(params_.w_cond.cols());
  Mat g(in, static_cast<Eigen::Index>(frames.size()));
  for (std::size_t s = 0; s < frames.size(); ++s) {
    const auto& f = frames[s];
    check_frame(f);
    g.col(s).head(E) = speaker;
    int row = E;
    for (int i = 0; i < nc; ++i) {
      g.col(s).segment(row, Q) = params_.categorical_embeddings[i].col(static_cast<int>(f.values[i]));
      row += Q;
    }
    for (int i = nc; i < layout.dim(); ++i) g(row++, s) = static_cast<T>(f.values[i]);
  }
  return g;
}

template <typename T>
typename SampleRnn<T>::Vec SampleRnn<T>::global_conditioning(const Vec& speaker,
                                                              const ConditioningFrame& frame) const {
  if (speaker.size() != config().speaker_embedding_size) {
    throw DataError("speaker vector has dimension " + std::to_string(speaker.size()) +
                    ", expected " + std::to_string(config().speaker_embedding_size));
  }
  const Mat g = expand_conditioning(speaker, std::span<const ConditioningFrame>(&frame, 1));
  return params_.w_cond * g.col(0) + params_.b_cond.col(0);
}

// ---------------------------------------------------------------------------
// Single steps

template <typename T>
typename SampleRnn<T>::TierStep SampleRnn<T>::tier_step(int tier, std::span<const T> prev_frame,
                                                        const Vec* upper, const Vec& c,
                                                        const Vec& state) const {
  const auto& cfg = config();
  if (tier < 0 || tier >= cfg.num_tiers()) throw UsageError("tier index out of range");
  const int H = cfg.hidden_size;
  const int fs = cfg.tier_frame_sizes()[tier];
  const auto& t = params_.tiers[tier];
  if (static_cast<int>(prev_frame.size()) != fs) {
    throw DataError("tier " + std::to_string(tier) + " expects a frame of " + std::to_string(fs) +
                    " samples, got " + std::to_string(prev_frame.size()));
  }
  if (state.size() != H) {
    throw DataError("tier state has dimension " + std::to_string(state.size()) + ", expected " +
                    std::to_string(H));
  }
  if (c.size() != cfg.global_features_size) throw DataError("conditioning vector dimension mismatch");
  Vec x(fs + cfg.global_features_size);
  for (int i = 0; i < fs; ++i) x(i) = prev_frame[i];
  x.tail(cfg.global_features_size) = c;
  Vec u = t.w_in * x + t.b_in.col(0);
  if (tier > 0) {
    if (upper == nullptr || upper->size() != H) {
      throw DataError("tier " + std::to_string(tier) + " needs an upper conditioning vector of " +
                      std::to_string(H));
    }
    u += *upper;
  }
  const Vec gi = t.w_ih * u + t.b_ih.col(0);
  const Vec gh = t.w_hh * state + t.b_hh.col(0);
  Vec h(H);
  for (int i = 0; i < H; ++i) {
    const T r = sigmoid(gi(i) + gh(i));
    const T z = sigmoid(gi(H + i) + gh(H + i));
    const T n = std::tanh(gi(2 * H + i) + r * gh(2 * H + i));
    h(i) = (T(1) - z) * n + z * state(i);
  }
  const Vec up = t.w_up * h + t.b_up.col(0);
  TierStep out;
  out.conditioning = Eigen::Map<const Mat>(up.data(), H, cfg.ratios[tier]);
  out.state = std::move(h);
  return out;
}

template <typename T>
typename SampleRnn<T>::Vec SampleRnn<T>::sample_logits(std::span<const audio::Code> prev,
                                                       const Vec& sample_conditioning,
                                                       const Vec& c) const {
  const auto& cfg = config();
  const int Qe = cfg.code_embedding_size;
  if (static_cast<int>(prev.size()) != cfg.sample_order) {
    throw DataError("sample level expects " + std::to_string(cfg.sample_order) +
                    " previous codes, got " + std::to_string(prev.size()));
  }
  if (sample_conditioning.size() != cfg.hidden_size || c.size() != cfg.global_features_size) {
    throw DataError("sample-level conditioning dimension mismatch");
  }
  Vec x(cfg.sample_order * Qe);
  for (int i = 0; i < cfg.sample_order; ++i) {
    x.segment(i * Qe, Qe) = params_.code_embedding.col(prev[i]);
  }
  Vec a1 = params_.w_sample_in * x + sample_conditioning + params_.w_sample_cond * c +
           params_.b_sample1.col(0);
  a1 = a1.cwiseMax(T(0));
  Vec a2 = params_.w_sample2 * a1 + params_.b_sample2.col(0);
  a2 = a2.cwiseMax(T(0));
  return params_.w_out * a2 + params_.b_out.col(0);
}

template <typename T>
typename SampleRnn<T>::Vec SampleRnn<T>::sample_level_predict(std::span<const audio::Code> prev,
                                                              const Vec& sample_conditioning,
                                                              const Vec& c) const {
  Vec logits = sample_logits(prev, sample_conditioning, c);
  const T mx = logits.maxCoeff();
  Vec p = (logits.array() - mx).exp().matrix();
  p /= p.sum();
  return p;
}

// ---------------------------------------------------------------------------
// Teacher-forced window pass

template <typename T>
struct SampleRnn<T>::Forward {
  struct TierCache {
    Mat x;       // (frame + C) x steps
    Mat u;       // H x steps
    Mat h_prev;  // H x steps
    Mat r, z, n, gh_n;
    Mat h_out;   // H x steps
    Mat up;      // (ratio * H) x steps
  };
  Mat g;        // (E + expanded) x frames
  Mat c;        // C x frames
  std::vector<TierCache> tiers;
  std::vector<audio::Code> seq;
  Mat a1, a2;   // pre-activations, H x positions
  Mat logp;     // 256 x positions
};

template <typename T>
typename SampleRnn<T>::WindowResult SampleRnn<T>::forward_training(
    const audio::TrainingWindow& window, const SpeakerEmbedding& speaker, State& state,
    Params* grads, double loss_scale, bool keep_probabilities) const {
  const auto& cfg = config();
  const int F = cfg.frame_size;
  const int S = cfg.seq_len;
  const int W = cfg.window_samples();
  const int H = cfg.hidden_size;
  const int C = cfg.global_features_size;
  const int E = cfg.speaker_embedding_size;
  const int Qe = cfg.code_embedding_size;
  const int order = cfg.sample_order;
  const int K = cfg.num_tiers();
  const auto sizes = cfg.tier_frame_sizes();

  if (static_cast<int>(window.history.size()) != F - 1 ||
      static_cast<int>(window.input_codes.size()) != W ||
      static_cast<int>(window.target_codes.size()) != W) {
    throw DataError("window '" + window.utterance_id + "' has the wrong shape for this model");
  }
  if (static_cast<int>(window.conditioning.size()) != S) {
    throw DataError("window '" + window.utterance_id + "' carries " +
                    std::to_string(window.conditioning.size()) + " conditioning frames, expected " +
                    std::to_string(S));
  }
  if (static_cast<int>(state.hidden.size()) != K) throw DataError("state has the wrong tier count");
  for (const auto& h : state.hidden) {
    if (h.size() != H) throw DataError("state dimension mismatch");
  }

  Forward f;
  f.seq = window.model_input();
  const auto& dec = decode_table();
  const Vec e = speaker_vector(speaker);
  f.g = expand_conditioning(e, window.conditioning);
  f.c = (params_.w_cond * f.g).colwise() + params_.b_cond.col(0);

  // Frame tiers.
  Mat upper;  // H x steps of the current tier, from the tier above
  int steps = S;
  f.tiers.resize(K);
  for (int k = 0; k < K; ++k) {
    const int fs = sizes[k];
    const auto& t = params_.tiers[k];
    auto& tc = f.tiers[k];
    tc.x.resize(fs + C, steps);
    for (int m = 0; m < steps; ++m) {
      const int begin = F + m * fs - fs;
      for (int i = 0; i < fs; ++i) tc.x(i, m) = static_cast<T>(dec[f.seq[begin + i]]);
      tc.x.col(m).tail(C) = f.c.col((m * fs) / F);
    }
    tc.u = (t.w_in * tc.x).colwise() + t.b_in.col(0);
    if (k > 0) tc.u += upper;
    const Mat gi = (t.w_ih * tc.u).colwise() + t.b_ih.col(0);
    tc.h_prev.resize(H, steps);
    tc.r.resize(H, steps);
    tc.z.resize(H, steps);
    tc.n.resize(H, steps);
    tc.gh_n.resize(H, steps);
    tc.h_out.resize(H, steps);
    Vec h = state.hidden[k];
    Vec gh(3 * H);
    for (int m = 0; m < steps; ++m) {
      tc.h_prev.col(m) = h;
      gh.noalias() = t.w_hh * h;
      gh += t.b_hh.col(0);
      for (int i = 0; i < H; ++i) {
        const T r = sigmoid(gi(i, m) + gh(i));
        const T z = sigmoid(gi(H + i, m) + gh(H + i));
        const T n = std::tanh(gi(2 * H + i, m) + r * gh(2 * H + i));
        tc.r(i, m) = r;
        tc.z(i, m) = z;
        tc.n(i, m) = n;
        tc.gh_n(i, m) = gh(2 * H + i);
        h(i) = (T(1) - z) * n + z * h(i);
      }
      tc.h_out.col(m) = h;
    }
    state.hidden[k] = h;
    tc.up = (t.w_up * tc.h_out).colwise() + t.b_up.col(0);
    upper = Eigen::Map<const Mat>(tc.up.data(), H, static_cast<Eigen::Index>(steps) * cfg.ratios[k]);
    steps *= cfg.ratios[k];
  }
  const bool was_fresh = state.fresh;
  state.fresh = false;

  // Sample level; `upper` now holds one H-vector per target position.
  Mat xs(order * Qe, W);
  for (int j = 0; j < W; ++j) {
    for (int i = 0; i < order; ++i) {
      xs.col(j).segment(i * Qe, Qe) = params_.code_embedding.col(f.seq[F + j - order + i]);
    }
  }
  const Mat cond_s = params_.w_sample_cond * f.c;  // H x frames
  f.a1.noalias() = params_.w_sample_in * xs;
  f.a1 += upper;
  for (int j = 0; j < W; ++j) f.a1.col(j) += cond_s.col(j / F) + params_.b_sample1.col(0);
  const Mat z1 = f.a1.cwiseMax(T(0));
  f.a2 = (params_.w_sample2 * z1).colwise() + params_.b_sample2.col(0);
  const Mat z2 = f.a2.cwiseMax(T(0));
  f.logp = (params_.w_out * z2).colwise() + params_.b_out.col(0);
  log_softmax_columns(f.logp);

  WindowResult result;
  result.position_nll.resize(W);
  double total = 0.0;
  for (int j = 0; j < W; ++j) {
    result.position_nll(j) = -f.logp(window.target_codes[j], j);
    total += static_cast<double>(result.position_nll(j));
  }
  result.mean_nll = total / W;
  if (!std::isfinite(result.mean_nll)) {
    std::ostringstream msg;
    msg << "non-finite loss on window " << window.index << " of '" << window.utterance_id
        << "'; parameter norms:";
    for (const auto& p : params_.named()) {
      msg << ' ' << p.name << '=' << std::sqrt(static_cast<double>(p.tensor->squaredNorm()));
    }
    throw NumericalError(msg.str());
  }
  if (keep_probabilities) result.probabilities = f.logp.array().exp().matrix();
  if (grads == nullptr) return result;

  // Backward.
  Params& g = *grads;
  const T scale = static_cast<T>(loss_scale / W);
  Mat dl = f.logp.array().exp().matrix();
  for (int j = 0; j < W; ++j) dl(window.target_codes[j], j) -= T(1);
  dl *= scale;
  g.w_out.noalias() += dl * z2.transpose();
  g.b_out += dl.rowwise().sum();
  Mat d2 = params_.w_out.transpose() * dl;
  d2.array() *= (f.a2.array() > T(0)).template cast<T>();
  g.w_sample2.noalias() += d2 * z1.transpose();
  g.b_sample2 += d2.rowwise().sum();
  Mat d1 = params_.w_sample2.transpose() * d2;
  d1.array() *= (f.a1.array() > T(0)).template cast<T>();
  g.w_sample_in.noalias() += d1 * xs.transpose();
  g.b_sample1 += d1.rowwise().sum();
  {
    const Mat dxs = params_.w_sample_in.transpose() * d1;
    for (int j = 0; j < W; ++j) {
      for (int i = 0; i < order; ++i) {
        g.code_embedding.col(f.seq[F + j - order + i]) += dxs.col(j).segment(i * Qe, Qe);
      }
    }
  }
  Mat d_frame(H, S);
  d_frame.setZero();
  for (int j = 0; j < W; ++j) d_frame.col(j / F) += d1.col(j);
  g.w_sample_cond.noalias() += d_frame * f.c.transpose();
  Mat dc = params_.w_sample_cond.transpose() * d_frame;  // C x frames

  Mat d_up_cols = std::move(d1);  // H x (steps of tier K-1 * ratio)
  for (int k = K - 1; k >= 0; --k) {
    const auto& t = params_.tiers[k];
    auto& gt = g.tiers[k];
    auto& tc = f.tiers[k];
    const int n_steps = static_cast<int>(tc.h_out.cols());
    const Eigen::Map<const Mat> d_up(d_up_cols.data(), static_cast<Eigen::Index>(cfg.ratios[k]) * H,
                                     n_steps);
    gt.w_up.noalias() += d_up * tc.h_out.transpose();
    gt.b_up += d_up.rowwise().sum();
    const Mat dh_out = t.w_up.transpose() * d_up;

    Mat dgi(3 * H, n_steps);
    Mat dgh(3 * H, n_steps);
    Vec dh_next = Vec::Zero(H);
    for (int m = n_steps - 1; m >= 0; --m) {
      const Vec dh = dh_out.col(m) + dh_next;
      for (int i = 0; i < H; ++i) {
        const T r = tc.r(i, m), z = tc.z(i, m), n = tc.n(i, m);
        const T dn = dh(i) * (T(1) - z);
        const T dz = dh(i) * (tc.h_prev(i, m) - n);
        const T dn_pre = dn * (T(1) - n * n);
        const T dr_pre = dn_pre * tc.gh_n(i, m) * r * (T(1) - r);
        const T dz_pre = dz * z * (T(1) - z);
        dgi(i, m) = dr_pre;
        dgi(H + i, m) = dz_pre;
        dgi(2 * H + i, m) = dn_pre;
        dgh(i, m) = dr_pre;
        dgh(H + i, m) = dz_pre;
        dgh(2 * H + i, m) = dn_pre * r;
      }
      dh_next = dh.cwiseProduct(tc.z.col(m));
      dh_next.noalias() += t.w_hh.transpose() * dgh.col(m);
    }
    if (was_fresh) gt.h0 += dh_next;
    gt.w_hh.noalias() += dgh * tc.h_prev.transpose();
    gt.b_hh += dgh.rowwise().sum();
    gt.w_ih.noalias() += dgi * tc.u.transpose();
    gt.b_ih += dgi.rowwise().sum();
    Mat du = t.w_ih.transpose() * dgi;
    gt.w_in.noalias() += du * tc.x.transpose();
    gt.b_in += du.rowwise().sum();
    const int fs = sizes[k];
    const Mat dx_c = t.w_in.rightCols(C).transpose() * du;
    for (int m = 0; m < n_steps; ++m) dc.col((m * fs) / F) += dx_c.col(m);
    d_up_cols = std::move(du);
  }

  g.w_cond.noalias() += dc * f.g.transpose();
  g.b_cond += dc.rowwise().sum();
  const Mat dg = params_.w_cond.transpose() * dc;
  if (speaker.from_table()) {
    g.speaker_table.col(std::get<OneHotProvenance>(speaker.provenance).index) +=
        dg.topRows(E).rowwise().sum();
  }
  const int Q = cfg.categorical_embedding_size;
  for (int s = 0; s < S; ++s) {
    int row = E;
    for (int i = 0; i < spec_.layout.num_categorical(); ++i) {
      const int id = static_cast<int>(window.conditioning[s].values[i]);
      g.categorical_embeddings[i].col(id) += dg.col(s).segment(row, Q);
      row += Q;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Step-wise paths

template <typename T>
typename SampleRnn<T>::Vec SampleRnn<T>::stepwise_log_probs(
    std::span<const ConditioningFrame> frames, const SpeakerEmbedding& speaker,
    std::span<const audio::Code> codes) const {
  const auto& cfg = config();
  const int F = cfg.frame_size;
  const int K = cfg.num_tiers();
  const auto sizes = cfg.tier_frame_sizes();
  const std::size_t total = frames.size() * F;
  if (codes.size() > total) throw DataError("more codes than conditioning frames cover");
  const Vec e = speaker_vector(speaker);
  std::vector<Vec> c;
  for (const auto& fr : frames) c.push_back(global_conditioning(e, fr));

  std::vector<audio::Code> seq(F, audio::kZeroCode);
  seq.insert(seq.end(), codes.begin(), codes.end());
  const auto& dec = decode_table();
  State st = initial_state();
  std::vector<Mat> cond(K);
  Vec out(static_cast<Eigen::Index>(codes.size()));
  std::vector<T> frame;
  for (std::size_t t = 0; t < codes.size(); ++t) {
    const std::size_t interval = t / F;
    for (int k = 0; k < K; ++k) {
      if (t % sizes[k] != 0) continue;
      frame.resize(sizes[k]);
      for (int i = 0; i < sizes[k]; ++i) frame[i] = static_cast<T>(dec[seq[F + t - sizes[k] + i]]);
      Vec upper;
      if (k > 0) upper = cond[k - 1].col((t % sizes[k - 1]) / sizes[k]);
      auto step = tier_step(k, frame, k > 0 ? &upper : nullptr, c[interval], st.hidden[k]);
      st.hidden[k] = std::move(step.state);
      cond[k] = std::move(step.conditioning);
    }
    const Vec sc = cond[K - 1].col(t % sizes[K - 1]);
    Vec logits = sample_logits(std::span<const audio::Code>(seq).subspan(F + t - cfg.sample_order,
                                                                          cfg.sample_order),
                               sc, c[interval]);
    const T mx = logits.maxCoeff();
    const T lse = mx + std::log((logits.array() - mx).exp().sum());
    out(static_cast<Eigen::Index>(t)) = logits(codes[t]) - lse;
  }
  return out;
}

template <typename T>
audio::QuantizedSequence SampleRnn<T>::generate(std::span<const ConditioningFrame> frames,
                                                const SpeakerEmbedding& speaker,
                                                std::uint64_t seed,
                                                const SamplingOptions& sampling) const {
  const auto& cfg = config();
  const int F = cfg.frame_size;
  const int K = cfg.num_tiers();
  const int H = cfg.hidden_size;
  const int Qe = cfg.code_embedding_size;
  const int order = cfg.sample_order;
  const int levels = cfg.quantization_levels;
  const auto sizes = cfg.tier_frame_sizes();
  if (sampling.mode == SamplingMode::kCategorical && !(sampling.temperature > 0.0)) {
    throw UsageError("sampling temperature must be positive");
  }
  const Vec e = speaker_vector(speaker);

  // Per-slot lookup tables: contribution of code q at history slot i.
  std::vector<Mat> slot(order);
  for (int i = 0; i < order; ++i) {
    slot[i] = params_.w_sample_in.middleCols(i * Qe, Qe) * params_.code_embedding;
  }
  const std::size_t total = frames.size() * F;
  std::vector<audio::Code> seq(F, audio::kZeroCode);
  seq.reserve(F + total);
  const auto& dec = decode_table();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  State st = initial_state();
  std::vector<Mat> cond(K);
  std::vector<T> frame;
  Vec c, sample_bias, a1(H), a2(H), logits(levels);
  std::vector<double> prob(levels);
  for (std::size_t t = 0; t < total; ++t) {
    if (t % F == 0) {
      c = global_conditioning(e, frames[t / F]);
      sample_bias = params_.w_sample_cond * c + params_.b_sample1.col(0);
    }
    for (int k = 0; k < K; ++k) {
      if (t % sizes[k] != 0) continue;
      frame.resize(sizes[k]);
      for (int i = 0; i < sizes[k]; ++i) frame[i] = static_cast<T>(dec[seq[F + t - sizes[k] + i]]);
      Vec upper;
      if (k > 0) upper = cond[k - 1].col((t % sizes[k - 1]) / sizes[k]);
      auto step = tier_step(k, frame, k > 0 ? &upper : nullptr, c, st.hidden[k]);
      st.hidden[k] = std::move(step.state);
      cond[k] = std::move(step.conditioning);
    }
    a1 = cond[K - 1].col(t % sizes[K - 1]) + sample_bias;
    for (int i = 0; i < order; ++i) a1 += slot[i].col(seq[F + t - order + i]);
    a1 = a1.cwiseMax(T(0));
    a2.noalias() = params_.w_sample2 * a1;
    a2 = (a2 + params_.b_sample2.col(0)).cwiseMax(T(0));
    logits.noalias() = params_.w_out * a2;
    logits += params_.b_out.col(0);
    int code = 0;
    if (sampling.mode == SamplingMode::kArgmax) {
      logits.maxCoeff(&code);
    } else {
      const double mx = static_cast<double>(logits.maxCoeff());
      double sum = 0.0;
      for (int q = 0; q < levels; ++q) {
        prob[q] = std::exp((static_cast<double>(logits(q)) - mx) / sampling.temperature);
        sum += prob[q];
      }
      double u = uniform(rng) * sum;
      code = levels - 1;
      for (int q = 0; q < levels; ++q) {
        u -= prob[q];
        if (u < 0.0) {
          code = q;
          break;
        }
      }
    }
    seq.push_back(static_cast<audio::Code>(code));
  }
  audio::QuantizedSequence out;
  out.codes.assign(seq.begin() + F, seq.end());
  out.source = "generated:" + speaker.speaker_id;
  return out;
}

template class SampleRnn<float>;
template class SampleRnn<double>;

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_spec(BinaryWriter& w, const ModelSpec& spec) {
  KeyValueConfig cfg;
  spec.config.to_config(cfg);
  w.str(cfg.format());
  w.u32(static_cast<std::uint32_t>(spec.layout.categorical_vocab.size()));
  for (int v : spec.layout.categorical_vocab) w.i64(v);
  w.i64(spec.layout.numeric);
  w.u32(spec.layout.f0uv ? 1 : 0);
  w.str(to_string(spec.speaker_mode));
  w.u32(static_cast<std::uint32_t>(spec.speakers.size()));
  for (const auto& s : spec.speakers) w.str(s);
}

ModelSpec read_spec(BinaryReader& r, const std::string& source) {
  ModelSpec spec;
  spec.config = ModelConfig::from_config(KeyValueConfig::parse(r.str(), source));
  const std::uint32_t nc = r.u32();
  if (nc > 4096) throw DataError(source + ": implausible categorical feature count");
  for (std::uint32_t i = 0; i < nc; ++i) spec.layout.categorical_vocab.push_back(static_cast<int>(r.i64()));
  spec.layout.numeric = static_cast<int>(r.i64());
  spec.layout.f0uv = r.u32() != 0;
  spec.speaker_mode = speaker_mode_from_string(r.str());
  const std::uint32_t ns = r.u32();
  if (ns > (1u << 24)) throw DataError(source + ": implausible speaker count");
  for (std::uint32_t i = 0; i < ns; ++i) spec.speakers.push_back(r.str());
  return spec;
}

std::string describe_mismatch(const ModelSpec& a, const ModelSpec& b) {
  if (!(a.config == b.config)) {
    KeyValueConfig ca, cb;
    a.config.to_config(ca);
    b.config.to_config(cb);
    for (const auto& [k, v] : ca.entries()) {
      const auto it = cb.entries().find(k);
      if (it == cb.entries().end() || it->second != v) {
        return k + " is " + v + " in the checkpoint but " +
               (it == cb.entries().end() ? std::string("unset") : it->second) + " was expected";
      }
    }
  }
  if (!(a.layout == b.layout)) return "conditioning feature layout differs";
  if (a.speaker_mode != b.speaker_mode) return "speaker conditioning mode differs";
  return "training speaker list differs";
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const SampleRnn<T>& model,
                     const std::map<std::string, std::string>& metadata) {
  BinaryWriter w(path, kCheckpointMagic, kCheckpointVersion);
  write_spec(w, model.spec());
  w.u32(static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    w.str(k);
    w.str(v);
  }
  const auto tensors = model.params().named();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  std::vector<double> buf;
  for (const auto& t : tensors) {
    w.str(t.name);
    w.i64(t.tensor->rows());
    w.i64(t.tensor->cols());
    buf.resize(static_cast<std::size_t>(t.tensor->size()));
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) buf[i] = static_cast<double>(t.tensor->data()[i]);
    w.f64s(buf);
  }
  w.close();
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  BinaryReader r(path, kCheckpointMagic, kCheckpointVersion);
  CheckpointInfo info;
  info.spec = read_spec(r, path.string());
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = r.str();
    info.metadata[k] = r.str();
  }
  return info;
}

template <typename T>
SampleRnn<T> load_checkpoint(const std::filesystem::path& path, const ModelSpec* expected) {
  BinaryReader r(path, kCheckpointMagic, kCheckpointVersion);
  ModelSpec spec = read_spec(r, path.string());
  if (expected != nullptr && !(spec == *expected)) {
    throw DataError(path.string() + ": checkpoint does not match the requested model (" +
                    describe_mismatch(spec, *expected) + ")");
  }
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < 2 * n_meta; ++i) r.str();
  SampleRnn<T> model(spec, 0);
  auto tensors = model.params().named();
  const std::uint32_t n = r.u32();
  if (n != tensors.size()) {
    throw DataError(path.string() + ": checkpoint holds " + std::to_string(n) +
                    " tensors, model has " + std::to_string(tensors.size()));
  }
  for (auto& t : tensors) {
    const std::string name = r.str();
    const auto rows = r.i64();
    const auto cols = r.i64();
    if (name != t.name || rows != t.tensor->rows() || cols != t.tensor->cols()) {
      throw DataError(path.string() + ": tensor '" + name + "' does not match '" + t.name + "'");
    }
    const auto values = r.f64s();
    if (static_cast<Eigen::Index>(values.size()) != t.tensor->size()) {
      throw DataError(path.string() + ": tensor '" + name + "' is truncated");
    }
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) {
      if (!std::isfinite(values[i])) throw DataError(path.string() + ": tensor '" + name + "' holds non-finite values");
      t.tensor->data()[i] = static_cast<T>(values[i]);
    }
  }
  return model;
}

template <typename To, typename From>
void copy_params(const SampleRnn<From>& from, SampleRnn<To>& to) {
  const auto src = from.params().named();
  auto dst = to.params().named();
  if (src.size() != dst.size()) throw UsageError("copy_params: parameter layouts differ");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].tensor->rows() != dst[i].tensor->rows() ||
        src[i].tensor->cols() != dst[i].tensor->cols()) {
      throw UsageError("copy_params: shape mismatch for " + src[i].name);
    }
    *dst[i].tensor = src[i].tensor->template cast<To>();
  }
}

template void save_checkpoint<float>(const std::filesystem::path&, const SampleRnn<float>&,
                                     const std::map<std::string, std::string>&);
template void save_checkpoint<double>(const std::filesystem::path&, const SampleRnn<double>&,
                                      const std::map<std::string, std::string>&);
template SampleRnn<float> load_checkpoint<float>(const std::filesystem::path&, const ModelSpec*);
template SampleRnn<double> load_checkpoint<double>(const std::filesystem::path&, const ModelSpec*);
template void copy_params<double, float>(const SampleRnn<float>&, SampleRnn<double>&);
template void copy_params<float, double>(const SampleRnn<double>&, SampleRnn<float>&);
template void copy_params<float, float>(const SampleRnn<float>&, SampleRnn<float>&);
template void copy_params<double, double>(const SampleRnn<double>&, SampleRnn<double>&);

}  // namespace samplernn::model
