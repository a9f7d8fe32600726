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

#include "samplernn/embeddings.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "samplernn/config.hpp"
#include "samplernn/container.hpp"
#include "samplernn/dsp.hpp"
#include "samplernn/encoder.hpp"
#include "samplernn/error.hpp"

namespace samplernn::embeddings {

namespace {

constexpr std::string_view kFramesMagic = "SRNNENCF";
constexpr std::string_view kEmbeddingHeader = "samplernn-embedding 1";

std::string chunk_key(const audio::WaveformClip& clip) {
  return clip.speaker_id + "/" + clip.utterance_id + "@" + std::to_string(clip.offset) + "+" +
         std::to_string(clip.samples.size());
}

}  // namespace

EncoderFrames encode_frames(const audio::WaveformClip& clip, const SpeechEncoder& encoder) {
  if (clip.sample_rate != audio::kSampleRate) {
    throw DataError("clip '" + clip.utterance_id + "' is at " + std::to_string(clip.sample_rate) +
                    " Hz; encoders expect 16 kHz");
  }
  const auto n = static_cast<std::int64_t>(clip.samples.size());
  if (n < encoder.min_samples()) {
    throw DataError("clip '" + clip.utterance_id + "' has " + std::to_string(n) +
                    " samples, shorter than the encoder's minimum of " +
                    std::to_string(encoder.min_samples()));
  }
  EncoderFrames out = encoder.encode(clip);
  if (out.dim() != encoder.dim()) {
    throw NumericalError(encoder.name() + " produced " + std::to_string(out.dim()) +
                         "-dim frames, expected " + std::to_string(encoder.dim()));
  }
  if (std::llabs(out.count() - encoder_frame_count(n)) > 1) {
    throw DataError(encoder.name() + " produced " + std::to_string(out.count()) + " frames for " +
                    std::to_string(n) + " samples");
  }
  if (!out.frames.allFinite()) {
    throw NumericalError(encoder.name() + " produced non-finite frames for '" +
                         clip.utterance_id + "'");
  }
  if (out.source.empty()) out.source = chunk_key(clip);
  return out;
}

// ---------------------------------------------------------------------------
// Precomputed frames

void save_encoder_frames(const std::filesystem::path& path, const EncoderFrames& frames) {
  BinaryWriter w(path, kFramesMagic, 1);
  w.str(frames.source);
  w.i64(frames.frames.rows());
  w.i64(frames.frames.cols());
  w.f64s(std::span<const double>(frames.frames.data(), static_cast<std::size_t>(frames.frames.size())));
  w.close();
}

EncoderFrames load_encoder_frames(const std::filesystem::path& path) {
  BinaryReader r(path, kFramesMagic, 1);
  EncoderFrames out;
  out.source = r.str();
  const auto rows = r.i64();
  const auto cols = r.i64();
  const auto values = r.f64s();
  if (rows < 0 || cols < 0 || static_cast<std::int64_t>(values.size()) != rows * cols) {
    throw DataError(path.string() + ": frame matrix shape does not match its data");
  }
  out.frames = Eigen::Map<const Eigen::MatrixXd>(values.data(), rows, cols);
  return out;
}

PrecomputedEncoder::PrecomputedEncoder(std::filesystem::path directory, int dim)
    : directory_(std::move(directory)), dim_(dim) {
  if (!std::filesystem::is_directory(directory_)) {
    throw DataError("precomputed frame directory '" + directory_.string() + "' does not exist");
  }
}

EncoderFrames PrecomputedEncoder::encode(const audio::WaveformClip& clip) const {
  auto it = cache_.find(clip.utterance_id);
  if (it == cache_.end()) {
    const auto path = directory_ / (clip.utterance_id + ".frames");
    if (!std::filesystem::exists(path)) {
      throw DataError("no precomputed frames for utterance '" + clip.utterance_id + "' in " +
                      directory_.string());
    }
    auto frames = load_encoder_frames(path);
    if (frames.dim() != dim_) {
      throw DataError(path.string() + ": frames have dimension " + std::to_string(frames.dim()) +
                      ", expected " + std::to_string(dim_));
    }
    it = cache_.emplace(clip.utterance_id, std::move(frames.frames)).first;
  }
  const Eigen::MatrixXd& all = it->second;
  const std::int64_t start = clip.offset / kEncoderHop;
  std::int64_t count = encoder_frame_count(static_cast<std::int64_t>(clip.samples.size()));
  if (start + count > all.cols()) {
    if (start + count - all.cols() > 1 || start >= all.cols()) {
      throw DataError("precomputed frames for '" + clip.utterance_id +
                      "' do not cover the requested chunk");
    }
    count = all.cols() - start;
  }
  EncoderFrames out;
  out.frames = all.middleCols(start, count);
  out.source = chunk_key(clip);
  return out;
}

// ---------------------------------------------------------------------------
// Spectral statistics

EncoderFrames MfccStatsEncoder::encode(const audio::WaveformClip& clip) const {
  dsp::SpectralConfig cfg;
  cfg.hop = kEncoderHop;
  cfg.num_filters = 50;
  cfg.num_coeffs = 25;
  const Eigen::MatrixXd logmel = dsp::log_mel_energies(clip.samples, cfg);
  const auto count = encoder_frame_count(static_cast<std::int64_t>(clip.samples.size()));
  Eigen::MatrixXd cep(25, count);
  for (std::int64_t n = 0; n < count; ++n) cep.col(n) = dsp::dct(logmel.col(n), 25);
  EncoderFrames out;
  out.frames.resize(kEmbeddingSize, count);
  for (std::int64_t n = 0; n < count; ++n) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(25);
    for (int k = 1; k <= 2; ++k) {
      const auto next = std::min<std::int64_t>(n + k, count - 1);
      const auto prev = std::max<std::int64_t>(n - k, 0);
      delta += k * (cep.col(next) - cep.col(prev));
    }
    delta /= 10.0;
    out.frames.col(n) << logmel.col(n), cep.col(n), delta;
  }
  out.source = chunk_key(clip);
  return out;
}

std::unique_ptr<SpeechEncoder> open_encoder(const std::string& spec) {
  if (spec == "mfcc" || spec == "mfcc-stats") return std::make_unique<MfccStatsEncoder>();
  const auto colon = spec.find(':');
  if (colon != std::string::npos) {
    const std::string kind = spec.substr(0, colon);
    const std::string arg = spec.substr(colon + 1);
    if (kind == "conv") return std::make_unique<ConvEncoder>(ConvEncoder::load(arg));
    if (kind == "precomputed") return std::make_unique<PrecomputedEncoder>(arg);
  }
  throw UsageError("unknown encoder '" + spec +
                   "' (expected mfcc, conv:<checkpoint> or precomputed:<dir>)");
}

// ---------------------------------------------------------------------------
// Averaging and seeds

SpeakerEmbedding average_embedding(const EncoderFrames& frames, const std::string& speaker_id,
                                   Provenance provenance) {
  return average_embedding(std::span<const EncoderFrames>(&frames, 1), speaker_id,
                           std::move(provenance));
}

SpeakerEmbedding average_embedding(std::span<const EncoderFrames> chunks,
                                   const std::string& speaker_id, Provenance provenance) {
  if (chunks.empty()) throw DataError("speaker '" + speaker_id + "': no encoder frames to average");
  const int dim = chunks.front().dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  std::int64_t count = 0;
  for (const auto& c : chunks) {
    if (c.dim() != dim) throw DataError("speaker '" + speaker_id + "': mixed frame dimensions");
    sum += c.frames.rowwise().sum();
    count += c.count();
  }
  if (count == 0) throw DataError("speaker '" + speaker_id + "': no encoder frames to average");
  SpeakerEmbedding e;
  e.speaker_id = speaker_id;
  e.vector = sum / static_cast<double>(count);
  e.provenance = std::move(provenance);
  return e;
}

std::int64_t SeedSignal::num_samples() const {
  std::int64_t n = 0;
  for (const auto& c : chunks) n += static_cast<std::int64_t>(c.samples.size());
  return n;
}

SeedSignal sample_seed(std::span<const audio::WaveformClip> pool, double seconds,
                       std::uint64_t rng_seed) {
  if (pool.empty()) throw DataError("seed pool is empty");
  if (!(seconds > 0.0)) throw UsageError("seed length must be positive");
  const std::string& speaker = pool.front().speaker_id;
  const int sr = audio::kSampleRate;
  struct Slot {
    std::size_t clip;
    std::int64_t offset;
  };
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].speaker_id != speaker) {
      throw DataError("seed pool mixes speakers '" + speaker + "' and '" + pool[i].speaker_id + "'");
    }
    if (pool[i].sample_rate != sr) throw DataError("seed pool clip is not 16 kHz");
    const auto whole = static_cast<std::int64_t>(pool[i].samples.size()) / sr;
    for (std::int64_t s = 0; s < whole; ++s) slots.push_back({i, s * sr});
  }
  const auto needed = static_cast<std::size_t>(std::ceil(seconds - 1e-9));
  if (slots.size() < needed) {
    throw DataError("speaker '" + speaker + "': seed pool holds " + std::to_string(slots.size()) +
                    " whole seconds but " + format_double(seconds) + " s were requested (short by " +
                    std::to_string(needed - slots.size()) + " s)");
  }
  std::mt19937_64 rng(rng_seed);
  for (std::size_t i = 0; i < needed; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
    std::swap(slots[i], slots[pick(rng)]);
  }
  SeedSignal seed;
  seed.speaker_id = speaker;
  std::ostringstream id;
  id << speaker << "/T=" << format_double(seconds) << "/seed=" << rng_seed;
  seed.id = id.str();
  auto remaining = static_cast<std::int64_t>(std::llround(seconds * sr));
  for (std::size_t i = 0; i < needed && remaining > 0; ++i) {
    const auto& src = pool[slots[i].clip];
    const auto len = std::min<std::int64_t>(sr, remaining);
    audio::WaveformClip chunk;
    chunk.sample_rate = sr;
    chunk.speaker_id = speaker;
    chunk.utterance_id = src.utterance_id;
    chunk.offset = src.offset + slots[i].offset;
    const auto begin = src.samples.begin() + slots[i].offset;
    chunk.samples.assign(begin, begin + len);
    seed.chunks.push_back(std::move(chunk));
    remaining -= len;
  }
  return seed;
}

SpeakerEmbedding embed_seed(const SeedSignal& seed, const SpeechEncoder& encoder) {
  std::vector<EncoderFrames> frames;
  for (const auto& chunk : seed.chunks) {
    if (static_cast<std::int64_t>(chunk.samples.size()) < encoder.min_samples()) continue;
    frames.push_back(encode_frames(chunk, encoder));
  }
  return average_embedding(frames, seed.speaker_id, EncoderProvenance{seed.id, seed.seconds()});
}

EncoderFrames CachedEncoder::encode(const audio::WaveformClip& clip) const {
  const std::string key = chunk_key(clip);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, inner_.encode(clip)).first;
  return it->second;
}

// ---------------------------------------------------------------------------
// Table

OneHotTable::OneHotTable(std::vector<std::string> speakers, int dim, std::uint64_t seed)
    : speakers_(std::move(speakers)) {
  if (dim <= 0) throw UsageError("embedding dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  table_.resize(dim, static_cast<Eigen::Index>(speakers_.size()));
  for (Eigen::Index i = 0; i < table_.size(); ++i) table_.data()[i] = normal(rng);
}

int OneHotTable::index_of(const std::string& speaker) const {
  const auto it = std::find(speakers_.begin(), speakers_.end(), speaker);
  if (it == speakers_.end()) {
    throw DataError("speaker '" + speaker +
                    "' is not in the training table; one-hot conditioning cannot represent "
                    "unseen speakers");
  }
  return static_cast<int>(it - speakers_.begin());
}

SpeakerEmbedding OneHotTable::lookup(int index) const {
  if (index < 0 || index >= size()) {
    throw DataError("speaker index " + std::to_string(index) + " outside a table of " +
                    std::to_string(size()) + " speakers");
  }
  SpeakerEmbedding e;
  e.speaker_id = speakers_[index];
  e.vector = table_.col(index);
  e.provenance = OneHotProvenance{index};
  return e;
}

// ---------------------------------------------------------------------------
// Files

void save_embedding(const std::filesystem::path& path, const SpeakerEmbedding& embedding) {
  std::ostringstream out;
  out << kEmbeddingHeader << '\n';
  out << "speaker\t" << embedding.speaker_id << '\n';
  if (const auto* p = std::get_if<OneHotProvenance>(&embedding.provenance)) {
    out << "provenance\tonehot\t" << p->index << '\n';
  } else {
    const auto& e = std::get<EncoderProvenance>(embedding.provenance);
    out << "provenance\tencoder\t" << format_double(e.seconds) << '\t' << e.seed_id << '\n';
  }
  out << "dim\t" << embedding.vector.size() << '\n';
  out << "values";
  for (Eigen::Index i = 0; i < embedding.vector.size(); ++i) {
    out << '\t' << format_double(embedding.vector[i]);
  }
  out << '\n';
  write_text_file(path, out.str());
}

SpeakerEmbedding load_embedding(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  const std::string src = path.string();
  std::string line;
  if (!std::getline(in, line) || line != kEmbeddingHeader) {
    throw DataError(src + ": not a speaker embedding file (or unsupported version)");
  }
  auto fields = [](const std::string& l) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const auto tab = l.find('\t', start);
      out.push_back(l.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return out;
  };
  SpeakerEmbedding e;
  long dim = -1;
  bool have_values = false;
  bool have_provenance = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = fields(line);
    try {
      if (f[0] == "speaker" && f.size() == 2) {
        e.speaker_id = f[1];
      } else if (f[0] == "provenance" && f.size() == 3 && f[1] == "onehot") {
        e.provenance = OneHotProvenance{std::stoi(f[2])};
        have_provenance = true;
      } else if (f[0] == "provenance" && f.size() == 4 && f[1] == "encoder") {
        e.provenance = EncoderProvenance{f[3], std::stod(f[2])};
        have_provenance = true;
      } else if (f[0] == "dim" && f.size() == 2) {
        dim = std::stol(f[1]);
      } else if (f[0] == "values") {
        e.vector.resize(static_cast<Eigen::Index>(f.size() - 1));
        for (std::size_t i = 1; i < f.size(); ++i) e.vector[i - 1] = std::stod(f[i]);
        have_values = true;
      } else {
        throw DataError(src + ": unexpected line '" + f[0] + "'");
      }
    } catch (const std::logic_error&) {
      throw DataError(src + ": malformed number on line '" + f[0] + "'");
    }
  }
  if (e.speaker_id.empty() || !have_values || !have_provenance || dim < 0) {
    throw DataError(src + ": incomplete embedding record");
  }
  if (e.vector.size() != dim) {
    throw DataError(src + ": declares dimension " + std::to_string(dim) + " but holds " +
                    std::to_string(e.vector.size()) + " values");
  }
  if (!e.vector.allFinite()) throw DataError(src + ": non-finite embedding values");
  return e;
}

void save_embeddings(const std::filesystem::path& dir, std::span<const SpeakerEmbedding> all) {
  std::filesystem::create_directories(dir);
  for (const auto& e : all) save_embedding(dir / (e.speaker_id + ".emb"), e);
}

std::map<std::string, SpeakerEmbedding> load_embeddings(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("embedding directory '" + dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".emb") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, SpeakerEmbedding> out;
  for (const auto& f : files) {
    auto e = load_embedding(f);
    const std::string id = e.speaker_id;
    if (!out.emplace(id, std::move(e)).second) {
      throw DataError(dir.string() + ": duplicate embedding for speaker '" + id + "'");
    }
  }
  return out;
}

}  // namespace samplernn::embeddings
