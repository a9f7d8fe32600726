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

#include "samplernn/conditioning.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "samplernn/container.hpp"
#include "samplernn/error.hpp"

namespace samplernn::conditioning {

namespace {

constexpr double kHtkUnitsPerSecond = 1e7;

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

int FeatureSchema::num_categorical() const {
  return static_cast<int>(std::count_if(features.begin(), features.end(), [](const auto& f) {
    return f.kind == FeatureKind::kCategorical;
  }));
}

int FeatureSchema::num_numeric() const { return size() - num_categorical(); }

std::vector<int> FeatureSchema::categorical_vocab() const {
  std::vector<int> v;
  for (const auto& f : features) {
    if (f.kind == FeatureKind::kCategorical) v.push_back(f.vocab);
  }
  return v;
}

FeatureSchema FeatureSchema::standard(int phone_vocab) {
  FeatureSchema s;
  for (const char* name : {"LL-phone", "L-phone", "C-phone", "R-phone", "RR-phone"}) {
    s.features.push_back({name, FeatureKind::kCategorical, phone_vocab});
  }
  for (int i = 0; i < 48; ++i) {
    s.features.push_back({"numeric-" + std::to_string(i), FeatureKind::kNumeric, 0});
  }
  return s;
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  FeatureSchema schema;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (tok.size() < 2) throw DataError(where + ": expected `name kind [vocab]`");
    FeatureSpec spec;
    spec.name = std::string(tok[0]);
    if (tok[1] == "categorical") {
      spec.kind = FeatureKind::kCategorical;
      if (tok.size() < 3 || !parse_number(tok[2], spec.vocab) || spec.vocab <= 0) {
        throw DataError(where + ": categorical feature needs a positive vocab size");
      }
    } else if (tok[1] == "numeric") {
      spec.kind = FeatureKind::kNumeric;
    } else {
      throw DataError(where + ": unknown feature kind '" + std::string(tok[1]) + "'");
    }
    schema.features.push_back(std::move(spec));
  }
  return schema;
}

void FeatureSchema::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "# feature schema: name kind [vocab]\n";
  for (const auto& f : features) {
    out << f.name << ' '
        << (f.kind == FeatureKind::kCategorical ? "categorical " + std::to_string(f.vocab)
                                                : std::string("numeric"))
        << '\n';
  }
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Labels

std::vector<PhonemeAnnotation> parse_labels(std::string_view text, const FeatureSchema& schema,
                                            const std::string& source) {
  std::vector<PhonemeAnnotation> out;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') {
      if (eol == text.size()) break;
      continue;
    }
    const auto where = source + ":" + std::to_string(lineno);
    if (static_cast<int>(tok.size()) != 2 + schema.size()) {
      throw DataError(where + ": expected " + std::to_string(2 + schema.size()) +
                      " fields, found " + std::to_string(tok.size()));
    }
    std::int64_t start = 0;
    std::int64_t end = 0;
    if (!parse_number(tok[0], start) || !parse_number(tok[1], end)) {
      throw DataError(where + ": malformed timestamps");
    }
    if (end <= start) throw DataError(where + ": end time not after start time");
    PhonemeAnnotation ann;
    ann.start_time = static_cast<double>(start) / kHtkUnitsPerSecond;
    ann.end_time = static_cast<double>(end) / kHtkUnitsPerSecond;
    if (!out.empty() && ann.start_time < out.back().end_time) {
      throw DataError(where + ": phone overlaps or precedes the previous one");
    }
    for (int f = 0; f < schema.size(); ++f) {
      const auto& spec = schema.features[f];
      const auto field = tok[2 + f];
      if (spec.kind == FeatureKind::kCategorical) {
        int id = 0;
        if (!parse_number(field, id) || id < 0 || id >= spec.vocab) {
          throw DataError(where + ": categorical answer '" + std::string(field) + "' for " +
                          spec.name + " outside [0, " + std::to_string(spec.vocab) + ")");
        }
        ann.categorical.push_back(id);
      } else {
        double v = 0.0;
        if (!parse_number(field, v) || !std::isfinite(v)) {
          throw DataError(where + ": malformed numeric answer for " + spec.name);
        }
        ann.numeric.push_back(v);
      }
    }
    out.push_back(std::move(ann));
    if (eol == text.size()) break;
  }
  return out;
}

std::vector<PhonemeAnnotation> parse_label_file(const std::filesystem::path& path,
                                                const FeatureSchema& schema) {
  return parse_labels(read_text_file(path), schema, path.string());
}

std::string format_labels(std::span<const PhonemeAnnotation> annotations,
                          const FeatureSchema& schema) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& a : annotations) {
    out << std::llround(a.start_time * kHtkUnitsPerSecond) << ' '
        << std::llround(a.end_time * kHtkUnitsPerSecond);
    std::size_t ci = 0;
    std::size_t ni = 0;
    for (const auto& f : schema.features) {
      out << ' ';
      if (f.kind == FeatureKind::kCategorical) {
        out << a.categorical.at(ci++);
      } else {
        out << a.numeric.at(ni++);
      }
    }
    out << '\n';
  }
  return out.str();
}

std::vector<PhonemeAnnotation> remap_annotations(std::span<const PhonemeAnnotation> annotations,
                                                 std::span<const audio::Segment> removed,
                                                 int sample_rate) {
  std::vector<PhonemeAnnotation> out;
  for (const auto& a : annotations) {
    const auto b = audio::map_through_removal(std::llround(a.start_time * sample_rate), removed);
    const auto e = audio::map_through_removal(std::llround(a.end_time * sample_rate), removed);
    if (e <= b) continue;
    PhonemeAnnotation m = a;
    m.start_time = static_cast<double>(b) / sample_rate;
    m.end_time = static_cast<double>(e) / sample_rate;
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Durations

std::vector<DurationFeature> append_duration_features(
    std::span<const PhonemeAnnotation> annotations, int frame_size, int sample_rate,
    std::int64_t num_frames) {
  if (annotations.empty()) {
    if (num_frames > 0) throw DataError("no phones to cover the utterance");
    return {};
  }
  const double dt = static_cast<double>(frame_size) / sample_rate;
  if (num_frames < 0) {
    num_frames = static_cast<std::int64_t>(std::ceil(annotations.back().end_time / dt - 1e-9));
  }
  std::vector<DurationFeature> out(static_cast<std::size_t>(num_frames));
  std::size_t p = 0;
  for (std::int64_t n = 0; n < num_frames; ++n) {
    const double begin = n * dt;
    const double mid = begin + 0.5 * dt;
    while (p + 1 < annotations.size() && annotations[p].end_time <= mid) ++p;
    const auto& a = annotations[p];
    int chosen = static_cast<int>(p);
    if (mid < a.start_time || mid >= a.end_time) {
      // Midpoint falls in a gap or past the last phone: take the phone that
      // overlaps this interval the most.
      double best = 0.0;
      chosen = -1;
      const double end = begin + dt;
      for (std::size_t q = (p > 0 ? p - 1 : 0); q < std::min(annotations.size(), p + 2); ++q) {
        const double ov = std::min(end, annotations[q].end_time) -
                          std::max(begin, annotations[q].start_time);
        if (ov > best) {
          best = ov;
          chosen = static_cast<int>(q);
        }
      }
      if (chosen < 0) {
        throw DataError("interval " + std::to_string(n) + " at " + std::to_string(begin) +
                        " s is not covered by any phone (label/audio mismatch)");
      }
    }
    const auto& c = annotations[static_cast<std::size_t>(chosen)];
    out[n].absolute = c.duration();
    out[n].relative = std::clamp((mid - c.start_time) / c.duration(), 0.0, 1.0);
    out[n].phoneme = chosen;
  }
  return out;
}

// ---------------------------------------------------------------------------
// F0

ProsodyTrack extract_f0_uv(const audio::WaveformClip& clip, const F0Config& config) {
  const auto& x = clip.samples;
  const auto n = static_cast<std::int64_t>(x.size());
  const std::int64_t frames = (n + config.frame_size - 1) / config.frame_size;
  const int min_lag = static_cast<int>(std::floor(clip.sample_rate / config.max_hz));
  const int max_lag = static_cast<int>(std::ceil(clip.sample_rate / config.min_hz));
  const int len = config.window;
  const double silence_power = std::pow(10.0, config.silence_dbfs / 10.0);

  const auto at = [&](std::int64_t i) { return (i >= 0 && i < n) ? x[i] : 0.0; };

  ProsodyTrack track;
  track.log_f0.assign(static_cast<std::size_t>(frames), 0.0);
  track.uv.assign(static_cast<std::size_t>(frames), 0);

  std::vector<double> seg(static_cast<std::size_t>(len + max_lag + 1));
  std::vector<double> nccf(static_cast<std::size_t>(max_lag + 2), 0.0);
  for (std::int64_t f = 0; f < frames; ++f) {
    const std::int64_t centre = f * config.frame_size + config.frame_size / 2;
    const std::int64_t begin = centre - len / 2;
    for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = at(begin + static_cast<std::int64_t>(i));

    double e0 = 0.0;
    for (int i = 0; i < len; ++i) e0 += seg[i] * seg[i];
    if (e0 / len < silence_power) continue;

    // Energy of the lagged segment, updated incrementally.
    double el = 0.0;
    for (int i = 0; i < len; ++i) el += seg[min_lag + i] * seg[min_lag + i];
    double best = -1.0;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      if (lag > min_lag) {
        el += seg[lag + len - 1] * seg[lag + len - 1] - seg[lag - 1] * seg[lag - 1];
      }
      double acc = 0.0;
      for (int i = 0; i < len; ++i) acc += seg[i] * seg[i + lag];
      const double denom = std::sqrt(e0 * std::max(el, 0.0));
      nccf[lag] = denom > 0.0 ? acc / denom : 0.0;
      best = std::max(best, nccf[lag]);
    }
    if (best < config.voicing_threshold) continue;

    // Shortest-lag local peak close to the global maximum avoids octave errors.
    int pick = -1;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      const double left = lag > min_lag ? nccf[lag - 1] : -1.0;
      const double right = lag < max_lag ? nccf[lag + 1] : -1.0;
      if (nccf[lag] >= 0.85 * best && nccf[lag] >= left && nccf[lag] >= right) {
        pick = lag;
        break;
      }
    }
    double period = pick;
    if (pick > min_lag && pick < max_lag) {
      const double a = nccf[pick - 1];
      const double b = nccf[pick];
      const double c = nccf[pick + 1];
      const double den = a - 2.0 * b + c;
      if (den < 0.0) period += 0.5 * (a - c) / den;
    }
    track.uv[f] = 1;
    track.log_f0[f] = std::log(clip.sample_rate / period);
  }

  // Fill unvoiced frames: linear interpolation inside, constant at the edges.
  std::vector<std::int64_t> voiced;
  for (std::int64_t f = 0; f < frames; ++f) {
    if (track.uv[f]) voiced.push_back(f);
  }
  if (voiced.empty()) {
    std::fill(track.log_f0.begin(), track.log_f0.end(), std::log(config.default_hz));
    return track;
  }
  for (std::int64_t f = 0; f < voiced.front(); ++f) track.log_f0[f] = track.log_f0[voiced.front()];
  for (std::int64_t f = voiced.back() + 1; f < frames; ++f) track.log_f0[f] = track.log_f0[voiced.back()];
  for (std::size_t k = 0; k + 1 < voiced.size(); ++k) {
    const auto a = voiced[k];
    const auto b = voiced[k + 1];
    for (std::int64_t f = a + 1; f < b; ++f) {
      const double t = static_cast<double>(f - a) / static_cast<double>(b - a);
      track.log_f0[f] = (1.0 - t) * track.log_f0[a] + t * track.log_f0[b];
    }
  }
  return track;
}

// ---------------------------------------------------------------------------
// Frames

FeatureLayout FeatureLayout::from_schema(const FeatureSchema& schema, bool with_f0uv) {
  FeatureLayout l;
  l.categorical_vocab = schema.categorical_vocab();
  l.numeric = schema.num_numeric();
  l.f0uv = with_f0uv;
  return l;
}

bool FeatureLayout::is_normalized(int index) const {
  if (index < num_categorical() || index >= dim()) return false;
  if (index == rel_duration_index()) return false;
  if (f0uv && index == uv_index()) return false;
  return true;
}

std::vector<ConditioningFrame> upsample_to_frames(std::span<const PhonemeAnnotation> annotations,
                                                  std::span<const DurationFeature> durations,
                                                  const ProsodyTrack* prosody,
                                                  const FeatureLayout& layout) {
  if (layout.f0uv) {
    if (prosody == nullptr) throw UsageError("layout requires logF0/UV but no prosody given");
    if (prosody->size() != durations.size() || prosody->uv.size() != durations.size()) {
      throw DataError("prosody track has " + std::to_string(prosody->size()) +
                      " frames, duration track has " + std::to_string(durations.size()));
    }
  }
  std::vector<ConditioningFrame> frames(durations.size());
  for (std::size_t n = 0; n < durations.size(); ++n) {
    const auto& d = durations[n];
    if (d.phoneme < 0 || static_cast<std::size_t>(d.phoneme) >= annotations.size()) {
      throw DataError("duration track references phone " + std::to_string(d.phoneme) +
                      " beyond the annotation");
    }
    const auto& a = annotations[static_cast<std::size_t>(d.phoneme)];
    if (static_cast<int>(a.categorical.size()) != layout.num_categorical() ||
        static_cast<int>(a.numeric.size()) != layout.numeric) {
      throw DataError("phone answers do not match the feature layout");
    }
    auto& v = frames[n].values;
    v.reserve(static_cast<std::size_t>(layout.dim()));
    for (int c : a.categorical) v.push_back(c);
    v.insert(v.end(), a.numeric.begin(), a.numeric.end());
    v.push_back(d.absolute);
    v.push_back(d.relative);
    if (layout.f0uv) {
      v.push_back(prosody->log_f0[n]);
      v.push_back(prosody->uv[n]);
    }
  }
  return frames;
}

std::vector<ConditioningFrame> drop_f0uv(std::span<const ConditioningFrame> frames,
                                         const FeatureLayout& with_f0uv) {
  if (!with_f0uv.f0uv) return {frames.begin(), frames.end()};
  std::vector<ConditioningFrame> out(frames.size());
  const auto keep = static_cast<std::size_t>(with_f0uv.dim() - 2);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].values.size() != static_cast<std::size_t>(with_f0uv.dim())) {
      throw DataError("frame dimension does not match the layout");
    }
    out[i].values.assign(frames[i].values.begin(),
                         frames[i].values.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Speaker statistics

const FeatureStats& SpeakerStats::at(const std::string& speaker) const {
  auto it = speakers.find(speaker);
  if (it == speakers.end()) {
    throw DataError("no normalization statistics for speaker '" + speaker + "'");
  }
  return it->second;
}

void SpeakerStatsBuilder::add(const std::string& speaker, const std::string& utterance,
                              std::span<const ConditioningFrame> frames) {
  const auto dim = static_cast<std::size_t>(layout_.dim());
  Moments m;
  m.mean.assign(dim, 0.0);
  m.m2.assign(dim, 0.0);
  for (const auto& f : frames) {
    if (f.values.size() != dim) throw DataError("frame dimension does not match the layout");
    ++m.n;
    for (std::size_t d = 0; d < dim; ++d) {
      const double delta = f.values[d] - m.mean[d];
      m.mean[d] += delta / static_cast<double>(m.n);
      m.m2[d] += delta * (f.values[d] - m.mean[d]);
    }
  }
  partial_[speaker][utterance] = std::move(m);
}

SpeakerStats SpeakerStatsBuilder::build() const {
  const auto dim = static_cast<std::size_t>(layout_.dim());
  SpeakerStats stats;
  for (const auto& [speaker, utts] : partial_) {
    Moments acc;
    acc.mean.assign(dim, 0.0);
    acc.m2.assign(dim, 0.0);
    for (const auto& [utt, m] : utts) {
      if (m.n == 0) continue;
      const auto n = acc.n + m.n;
      for (std::size_t d = 0; d < dim; ++d) {
        const double delta = m.mean[d] - acc.mean[d];
        acc.mean[d] += delta * static_cast<double>(m.n) / static_cast<double>(n);
        acc.m2[d] += m.m2[d] + delta * delta * static_cast<double>(acc.n) *
                                   static_cast<double>(m.n) / static_cast<double>(n);
      }
      acc.n = n;
    }
    if (acc.n < 2) {
      throw DataError("speaker '" + speaker + "' has " + std::to_string(acc.n) +
                      " frames; at least 2 are needed for statistics");
    }
    FeatureStats fs;
    fs.frames = acc.n;
    fs.mean = acc.mean;
    fs.stddev.resize(dim);
    fs.included.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      fs.stddev[d] = std::sqrt(acc.m2[d] / static_cast<double>(acc.n));
      const bool wanted = layout_.is_normalized(static_cast<int>(d));
      const bool degenerate = fs.stddev[d] <= 1e-9 * (1.0 + std::abs(fs.mean[d]));
      if (wanted && degenerate) {
        spdlog::warn("speaker {}: feature {} is constant; excluded from normalization",
                     speaker, d);
      }
      fs.included[d] = wanted && !degenerate;
    }
    stats.speakers.emplace(speaker, std::move(fs));
  }
  return stats;
}

namespace {
std::vector<ConditioningFrame> apply_stats(std::span<const ConditioningFrame> frames,
                                           const FeatureStats& fs, bool inverse) {
  std::vector<ConditioningFrame> out(frames.begin(), frames.end());
  for (auto& f : out) {
    if (f.values.size() != fs.mean.size()) {
      throw DataError("frame dimension " + std::to_string(f.values.size()) +
                      " does not match statistics dimension " + std::to_string(fs.mean.size()));
    }
    for (std::size_t d = 0; d < f.values.size(); ++d) {
      if (!fs.included[d]) continue;
      f.values[d] = inverse ? f.values[d] * fs.stddev[d] + fs.mean[d]
                            : (f.values[d] - fs.mean[d]) / fs.stddev[d];
    }
  }
  return out;
}
}  // namespace

std::vector<ConditioningFrame> zscore_normalize(std::span<const ConditioningFrame> frames,
                                                const SpeakerStats& stats,
                                                const std::string& speaker) {
  return apply_stats(frames, stats.at(speaker), false);
}

std::vector<ConditioningFrame> zscore_denormalize(std::span<const ConditioningFrame> frames,
                                                  const SpeakerStats& stats,
                                                  const std::string& speaker) {
  return apply_stats(frames, stats.at(speaker), true);
}

void SpeakerStats::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "# samplernn speaker statistics v1\n";
  out << "# speaker\tfeature\tmean\tstddev\tincluded\tframes\n";
  out << std::setprecision(17);
  for (const auto& [speaker, fs] : speakers) {
    for (std::size_t d = 0; d < fs.mean.size(); ++d) {
      out << speaker << '\t' << d << '\t' << fs.mean[d] << '\t' << fs.stddev[d] << '\t'
          << (fs.included[d] ? 1 : 0) << '\t' << fs.frames << '\n';
    }
  }
  write_text_file(path, out.str());
}

SpeakerStats SpeakerStats::load(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  SpeakerStats stats;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string speaker;
    std::size_t d = 0;
    double mean = 0.0;
    double sd = 0.0;
    int inc = 0;
    std::int64_t frames = 0;
    if (!(ls >> speaker >> d >> mean >> sd >> inc >> frames)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    auto& fs = stats.speakers[speaker];
    if (d != fs.mean.size()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": features out of order");
    }
    fs.mean.push_back(mean);
    fs.stddev.push_back(sd);
    fs.included.push_back(inc != 0);
    fs.frames = frames;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {
constexpr std::string_view kFramesMagic = "SRNNFEAT";
constexpr std::uint32_t kFramesVersion = 1;
}  // namespace

void save_frames(const std::filesystem::path& path, std::span<const ConditioningFrame> frames) {
  BinaryWriter w(path, kFramesMagic, kFramesVersion);
  const std::uint64_t dim = frames.empty() ? 0 : frames.front().values.size();
  w.u64(frames.size());
  w.u64(dim);
  std::vector<double> flat;
  flat.reserve(frames.size() * dim);
  for (const auto& f : frames) {
    if (f.values.size() != dim) throw DataError("ragged conditioning frames");
    flat.insert(flat.end(), f.values.begin(), f.values.end());
  }
  w.f64s(flat);
  w.close();
}

std::vector<ConditioningFrame> load_frames(const std::filesystem::path& path) {
  BinaryReader r(path, kFramesMagic, kFramesVersion);
  const auto count = r.u64();
  const auto dim = r.u64();
  const auto flat = r.f64s();
  if (flat.size() != count * dim) throw DataError("corrupt frame container: " + path.string());
  std::vector<ConditioningFrame> frames(count);
  for (std::size_t i = 0; i < count; ++i) {
    frames[i].values.assign(flat.begin() + static_cast<std::ptrdiff_t>(i * dim),
                            flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  }
  return frames;
}

}  // namespace samplernn::conditioning
