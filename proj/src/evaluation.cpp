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

#include "samplernn/evaluation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "samplernn/config.hpp"
#include "samplernn/dsp.hpp"
#include "samplernn/error.hpp"

namespace samplernn::evaluation {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_number(double v) { return std::isnan(v) ? "nan" : format_double(v); }

std::uint64_t mix(std::uint64_t seed, std::string_view key, std::uint64_t extra) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h ^= extra + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

}  // namespace

CepstraTrack extract_cepstra(const audio::WaveformClip& clip) {
  const dsp::SpectralConfig cfg;
  if (clip.sample_rate != cfg.sample_rate) {
    throw DataError("clip '" + clip.utterance_id + "' is not 16 kHz");
  }
  if (static_cast<int>(clip.samples.size()) < cfg.window) {
    throw DataError("clip '" + clip.utterance_id + "' is shorter than one 25 ms analysis window");
  }
  CepstraTrack t;
  t.coeffs = dsp::mel_cepstra(clip.samples, cfg);
  if (!t.coeffs.allFinite()) throw NumericalError("non-finite cepstra for '" + clip.utterance_id + "'");
  return t;
}

double mcd(const CepstraTrack& ref, const CepstraTrack& syn) {
  if (ref.coeffs.rows() != syn.coeffs.rows() || ref.coeffs.rows() < 2) {
    throw DataError("cepstral tracks have different orders");
  }
  const Eigen::Index diff = std::abs(ref.frames() - syn.frames());
  if (diff > kFrameTolerance) {
    throw DataError("cepstral tracks differ by " + std::to_string(diff) + " frames");
  }
  const Eigen::Index n = std::min(ref.frames(), syn.frames());
  if (n == 0) throw DataError("cannot compare empty cepstral tracks");
  const double k = 10.0 / std::numbers::ln10;
  const Eigen::Index d = ref.coeffs.rows() - 1;
  double total = 0.0;
  for (Eigen::Index f = 0; f < n; ++f) {
    const double sq = (ref.coeffs.col(f).tail(d) - syn.coeffs.col(f).tail(d)).squaredNorm();
    total += k * std::sqrt(2.0 * sq);
  }
  return total / static_cast<double>(n);
}

F0Error rmse_f0(const conditioning::ProsodyTrack& ref, const conditioning::ProsodyTrack& syn) {
  if (ref.size() != syn.size() || ref.uv.size() != ref.size() || syn.uv.size() != syn.size()) {
    throw DataError("F0 tracks have different lengths (" + std::to_string(ref.size()) + " vs " +
                    std::to_string(syn.size()) + ")");
  }
  F0Error e;
  double sq = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!ref.uv[i] || !syn.uv[i]) continue;
    const double d = std::exp(ref.log_f0[i]) - std::exp(syn.log_f0[i]);
    sq += d * d;
    ++e.voiced_frames;
  }
  e.rmse_hz = e.defined() ? std::sqrt(sq / static_cast<double>(e.voiced_frames)) : kNaN;
  return e;
}

UtteranceScore score_utterance(const audio::WaveformClip& reference,
                               const audio::WaveformClip& synthesized) {
  const auto n = std::min(reference.samples.size(), synthesized.samples.size());
  audio::WaveformClip ref = reference;
  audio::WaveformClip syn = synthesized;
  ref.samples.resize(n);
  syn.samples.resize(n);
  UtteranceScore s;
  s.speaker = reference.speaker_id;
  s.utterance = reference.utterance_id;
  const auto cr = extract_cepstra(ref);
  const auto cs = extract_cepstra(syn);
  s.mcd_db = mcd(cr, cs);
  s.frames = std::min(cr.frames(), cs.frames());
  const auto f0 = rmse_f0(conditioning::extract_f0_uv(ref), conditioning::extract_f0_uv(syn));
  s.rmse_f0_hz = f0.rmse_hz;
  s.voiced_frames = f0.voiced_frames;
  return s;
}

// ---------------------------------------------------------------------------
// Reports

void DistortionReport::aggregate() {
  speakers.clear();
  curve.clear();
  std::map<std::pair<double, std::string>, std::vector<const UtteranceScore*>> groups;
  for (const auto& u : utterances) groups[{u.seed_seconds, u.speaker}].push_back(&u);
  for (const auto& [key, rows] : groups) {
    SpeakerScore s;
    s.seed_seconds = key.first;
    s.speaker = key.second;
    s.utterances = static_cast<int>(rows.size());
    double rmse = 0.0;
    int defined = 0;
    for (const auto* r : rows) {
      s.mcd_db += r->mcd_db;
      if (!std::isnan(r->rmse_f0_hz)) {
        rmse += r->rmse_f0_hz;
        ++defined;
      }
    }
    s.mcd_db /= static_cast<double>(rows.size());
    s.rmse_f0_hz = defined > 0 ? rmse / defined : kNaN;
    speakers.push_back(s);
  }
  std::sort(speakers.begin(), speakers.end(), [](const SpeakerScore& a, const SpeakerScore& b) {
    return a.speaker != b.speaker ? a.speaker < b.speaker : a.seed_seconds < b.seed_seconds;
  });
  std::map<double, std::vector<const SpeakerScore*>> by_t;
  for (const auto& s : speakers) by_t[s.seed_seconds].push_back(&s);
  for (const auto& [t, rows] : by_t) {
    CurvePoint p;
    p.seed_seconds = t;
    p.speakers = static_cast<int>(rows.size());
    double rmse = 0.0;
    for (const auto* r : rows) {
      p.mcd_db += r->mcd_db;
      if (!std::isnan(r->rmse_f0_hz)) {
        rmse += r->rmse_f0_hz;
        ++p.rmse_speakers;
      }
    }
    p.mcd_db /= static_cast<double>(rows.size());
    p.rmse_f0_hz = p.rmse_speakers > 0 ? rmse / p.rmse_speakers : kNaN;
    curve.push_back(p);
  }
}

std::string DistortionReport::utterances_csv() const {
  std::ostringstream out;
  out << "speaker,utterance,T,mcd_db,rmse_f0_hz,frames,voiced_frames\n";
  for (const auto& u : utterances) {
    out << u.speaker << ',' << u.utterance << ',' << format_double(u.seed_seconds) << ','
        << csv_number(u.mcd_db) << ',' << csv_number(u.rmse_f0_hz) << ',' << u.frames << ','
        << u.voiced_frames << '\n';
  }
  return out.str();
}

std::string DistortionReport::speakers_csv() const {
  std::ostringstream out;
  out << "speaker,T,mcd_db,rmse_f0_hz,utterances\n";
  for (const auto& s : speakers) {
    out << s.speaker << ',' << format_double(s.seed_seconds) << ',' << csv_number(s.mcd_db) << ','
        << csv_number(s.rmse_f0_hz) << ',' << s.utterances << '\n';
  }
  return out.str();
}

std::string DistortionReport::curve_csv() const {
  std::ostringstream out;
  out << "T,mcd_db,rmse_f0_hz,speakers,rmse_speakers\n";
  for (const auto& p : curve) {
    out << format_double(p.seed_seconds) << ',' << csv_number(p.mcd_db) << ','
        << csv_number(p.rmse_f0_hz) << ',' << p.speakers << ',' << p.rmse_speakers << '\n';
  }
  return out.str();
}

std::vector<CurvePoint> parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "T,mcd_db,rmse_f0_hz,speakers,rmse_speakers") {
    throw DataError("not an adaptation curve CSV");
  }
  std::vector<CurvePoint> out;
  auto number = [](const std::string& s) { return s == "nan" ? kNaN : std::stod(s); };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw DataError("malformed curve row '" + line + "'");
    try {
      out.push_back({number(f[0]), number(f[1]), number(f[2]), std::stoi(f[3]), std::stoi(f[4])});
    } catch (const std::logic_error&) {
      throw DataError("malformed curve row '" + line + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adaptation curve

std::vector<double> default_seed_seconds() { return {1, 10, 60, 120}; }

audio::WaveformClip codes_to_clip(const audio::QuantizedSequence& codes, const std::string& speaker,
                                  const std::string& utterance) {
  audio::WaveformClip clip;
  clip.samples = audio::mulaw_decode(codes.codes);
  clip.speaker_id = speaker;
  clip.utterance_id = utterance;
  return clip;
}

DistortionReport adaptation_curve(const model::SampleRnn<float>& model,
                                  const embeddings::SpeechEncoder& encoder,
                                  std::span<const AdaptationSpeaker> speakers,
                                  const CurveOptions& options) {
  if (model.spec().speaker_mode != model::SpeakerMode::kEncoder) {
    throw UsageError("the adaptation curve needs an encoder-conditioned model");
  }
  if (options.seed_seconds.empty()) throw UsageError("no seed lengths given");
  const embeddings::CachedEncoder cached(encoder);
  const int F = model.config().frame_size;
  DistortionReport report;
  for (const auto& spk : speakers) {
    if (spk.tests.empty()) throw DataError("adaptation speaker '" + spk.id + "' has no test utterances");
    for (const double t : options.seed_seconds) {
      const auto seed = embeddings::sample_seed(spk.seed_pool, t,
                                                mix(options.seed, spk.id, static_cast<std::uint64_t>(t * 1000)));
      const auto embedding = embeddings::embed_seed(seed, cached);
      int done = 0;
      for (const auto& test : spk.tests) {
        if (options.max_test_utterances > 0 && done >= options.max_test_utterances) break;
        std::span<const ConditioningFrame> frames(test.frames);
        audio::WaveformClip reference = test.reference;
        if (options.max_frames > 0 && static_cast<int>(frames.size()) > options.max_frames) {
          frames = frames.first(static_cast<std::size_t>(options.max_frames));
          reference.samples.resize(std::min(reference.samples.size(),
                                            static_cast<std::size_t>(options.max_frames) * F));
        }
        const auto codes = model.generate(frames, embedding, mix(options.seed, test.id, 7),
                                          options.sampling);
        auto score = score_utterance(reference, codes_to_clip(codes, spk.id, test.id));
        score.speaker = spk.id;
        score.utterance = test.id;
        score.seed_seconds = t;
        spdlog::info("adaptation {} T={} {}: MCD {:.3f} dB, RMSE F0 {:.2f} Hz", spk.id, t, test.id,
                     score.mcd_db, score.rmse_f0_hz);
        report.utterances.push_back(score);
        ++done;
      }
    }
  }
  report.aggregate();
  return report;
}

}  // namespace samplernn::evaluation
