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

#include "samplernn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "samplernn/container.hpp"
#include "samplernn/error.hpp"

namespace samplernn::synthetic {

namespace {

enum class PhoneClass { kSilence, kVowel, kNasal, kFricative, kPlosive, kApproximant };

struct Phone {
  PhoneClass cls = PhoneClass::kSilence;
  double f1 = 500, f2 = 1500, f3 = 2500;
  double noise_hz = 0;   // fricative / burst centre
  double amplitude = 0;  // voiced amplitude
};

constexpr int kNumNumeric = 48;
constexpr double kSr = audio::kSampleRate;

const std::array<Phone, kPhoneVocab>& inventory() {
  static const auto table = [] {
    std::array<Phone, kPhoneVocab> t{};
    // Vowel formant targets (F1, F2, F3) loosely following adult averages.
    const double vowels[20][3] = {
        {270, 2290, 3010}, {390, 1990, 2550}, {530, 1840, 2480}, {660, 1720, 2410},
        {730, 1090, 2440}, {570, 840, 2410},  {440, 1020, 2240}, {300, 870, 2240},
        {640, 1190, 2390}, {490, 1350, 1690}, {350, 1600, 2600}, {600, 1500, 2500},
        {450, 1700, 2700}, {700, 1300, 2500}, {320, 1200, 2300}, {500, 1100, 2400},
        {420, 2100, 2800}, {620, 1950, 2600}, {380, 950, 2350},  {560, 1550, 2350}};
    for (int i = 0; i < 20; ++i) {
      t[1 + i] = {PhoneClass::kVowel, vowels[i][0], vowels[i][1], vowels[i][2], 0, 1.0};
    }
    for (int i = 0; i < 8; ++i) {
      t[21 + i] = {PhoneClass::kNasal, 260, 900 + 110.0 * i, 2400 + 40.0 * i, 0, 0.45};
    }
    for (int i = 0; i < 12; ++i) {
      t[29 + i] = {PhoneClass::kFricative, 400, 1500, 2500, 2200 + 380.0 * i, 0};
    }
    for (int i = 0; i < 8; ++i) {
      t[41 + i] = {PhoneClass::kPlosive, 400, 1500, 2500, 1200 + 400.0 * i, 0};
    }
    for (int i = 0; i < 15; ++i) {
      t[49 + i] = {PhoneClass::kApproximant, 300 + 25.0 * i, 700 + 100.0 * i, 2000 + 50.0 * i, 0,
                   0.7};
    }
    return t;
  }();
  return table;
}

// Fixed pseudo-articulatory answers per phone id.
const std::array<std::array<double, 31>, kPhoneVocab>& phone_bits() {
  static const auto table = [] {
    std::array<std::array<double, 31>, kPhoneVocab> t{};
    std::mt19937_64 rng(20260101);
    std::bernoulli_distribution bit(0.5);
    for (auto& row : t) {
      for (auto& v : row) v = bit(rng) ? 1.0 : 0.0;
    }
    return t;
  }();
  return table;
}

// Two-pole resonator with unity gain at DC (coefficients recomputed per sample).
struct Resonator {
  double y1 = 0, y2 = 0;
  double step(double x, double freq, double bw) {
    const double c = -std::exp(-2.0 * std::numbers::pi * bw / kSr);
    const double b = 2.0 * std::exp(-std::numbers::pi * bw / kSr) * std::cos(2.0 * std::numbers::pi * freq / kSr);
    const double a = 1.0 - b - c;
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

struct Segment {
  int phone = 0;
  std::int64_t length = 0;  // samples
  bool accent = false;
  int syllable_position = 0;
};

std::vector<Segment> plan_phones(const Voice& voice, double seconds, bool continuous,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto dur = [&](double lo, double hi) {
    return static_cast<std::int64_t>((lo + (hi - lo) * u(rng)) * voice.rate * kSr);
  };
  auto pick = [&](int first, int count) {
    return first + static_cast<int>(u(rng) * count) % count;
  };
  std::vector<Segment> out;
  const auto target = static_cast<std::int64_t>(seconds * kSr);
  std::int64_t total = 0;
  if (!continuous) {
    out.push_back({0, dur(0.15, 0.3), false, 0});
    total += out.back().length;
  }
  const std::int64_t tail = continuous ? 0 : static_cast<std::int64_t>(0.2 * kSr);
  while (total + tail < target) {
    const double r = u(rng);
    if (r < 0.55) {
      int c;
      const double k = u(rng);
      if (k < 0.3) c = pick(21, 8);
      else if (k < 0.6) c = pick(29, 12);
      else if (k < 0.75) c = pick(41, 8);
      else c = pick(49, 15);
      const auto cls = inventory()[c].cls;
      const auto len = cls == PhoneClass::kFricative ? dur(0.06, 0.11) : dur(0.04, 0.08);
      out.push_back({c, len, false, 0});
      total += len;
    }
    const auto v = pick(1, 20);
    out.push_back({v, dur(0.09, 0.19), u(rng) < 0.3, 1});
    total += out.back().length;
    if (!continuous && u(rng) < 0.07) {
      out.push_back({0, dur(0.15, 0.25), false, 0});
      total += out.back().length;
    }
  }
  if (!continuous) out.push_back({0, dur(0.2, 0.3), false, 0});
  return out;
}

std::vector<conditioning::PhonemeAnnotation> make_labels(const std::vector<Segment>& phones) {
  std::vector<conditioning::PhonemeAnnotation> labels;
  const int n = static_cast<int>(phones.size());
  std::int64_t t = 0;
  for (int i = 0; i < n; ++i) {
    conditioning::PhonemeAnnotation a;
    a.start_time = static_cast<double>(t) / kSr;
    t += phones[i].length;
    a.end_time = static_cast<double>(t) / kSr;
    for (int k = -2; k <= 2; ++k) {
      const int j = i + k;
      a.categorical.push_back(j < 0 || j >= n ? 0 : phones[j].phone);
    }
    const auto& ph = inventory()[phones[i].phone];
    a.numeric.assign(kNumNumeric, 0.0);
    a.numeric[static_cast<int>(ph.cls)] = 1.0;
    a.numeric[6] = ph.amplitude > 0 ? 1.0 : 0.0;
    a.numeric[7] = phones[i].accent ? 1.0 : 0.0;
    a.numeric[8] = static_cast<double>(i) / n;
    a.numeric[9] = static_cast<double>(n - 1 - i) / n;
    a.numeric[10] = phones[i].syllable_position;
    a.numeric[11] = i > 0 && phones[i - 1].phone == 0 ? 1.0 : 0.0;
    a.numeric[12] = i + 1 < n && phones[i + 1].phone == 0 ? 1.0 : 0.0;
    a.numeric[13] = ph.f1 / 1000.0;
    a.numeric[14] = ph.f2 / 1000.0;
    a.numeric[15] = ph.f3 / 1000.0;
    a.numeric[16] = ph.noise_hz / 1000.0;
    const auto& bits = phone_bits()[phones[i].phone];
    std::copy(bits.begin(), bits.end(), a.numeric.begin() + 17);
    labels.push_back(std::move(a));
  }
  return labels;
}

std::vector<double> render(const Voice& voice, const std::vector<Segment>& phones,
                           std::mt19937_64& rng) {
  std::int64_t total = 0;
  for (const auto& p : phones) total += p.length;
  std::vector<double> out(static_cast<std::size_t>(total));
  std::normal_distribution<double> noise(0.0, 1.0);
  Resonator r1, r2, r3, fric;
  double f1 = 500, f2 = 1500, f3 = 2500;
  double voiced_amp = 0, noise_amp = 0, f0 = voice.f0_hz, phase = 0;
  double glottal1 = 0, glottal2 = 0, prev_source = 0;
  const double smooth_formant = std::exp(-1.0 / (0.015 * kSr));
  const double smooth_amp = std::exp(-1.0 / (0.006 * kSr));
  const double smooth_f0 = std::exp(-1.0 / (0.03 * kSr));
  std::int64_t n = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const auto& seg = phones[i];
    const auto& ph = inventory()[seg.phone];
    const double progress_base = static_cast<double>(n) / static_cast<double>(total);
    for (std::int64_t k = 0; k < seg.length; ++k, ++n) {
      const double within = static_cast<double>(k) / static_cast<double>(seg.length);
      double target_voiced = ph.amplitude;
      double target_noise = 0.0;
      if (ph.cls == PhoneClass::kFricative) target_noise = 0.35;
      if (ph.cls == PhoneClass::kPlosive) {
        target_noise = within > 0.6 ? 0.5 : 0.0;
      }
      const double progress = progress_base + static_cast<double>(k) / static_cast<double>(total);
      const double f0_target = voice.f0_hz * (1.05 - 0.15 * progress) * (seg.accent ? 1.15 : 1.0);
      f0 = smooth_f0 * f0 + (1.0 - smooth_f0) * f0_target;
      f1 = smooth_formant * f1 + (1.0 - smooth_formant) * ph.f1 * voice.formant_scale;
      f2 = smooth_formant * f2 + (1.0 - smooth_formant) * ph.f2 * voice.formant_scale;
      f3 = smooth_formant * f3 + (1.0 - smooth_formant) * ph.f3 * voice.formant_scale;
      voiced_amp = smooth_amp * voiced_amp + (1.0 - smooth_amp) * target_voiced;
      noise_amp = smooth_amp * noise_amp + (1.0 - smooth_amp) * target_noise;

      phase += f0 / kSr;
      double pulse = 0.0;
      if (phase >= 1.0) {
        phase -= 1.0;
        pulse = 1.0;
      }
      glottal1 = voice.tilt * glottal1 + pulse;
      glottal2 = voice.tilt * glottal2 + glottal1;
      const double source = glottal2 + voice.breathiness * noise(rng) * 10.0;
      const double radiated = source - prev_source;
      prev_source = source;
      double v = r1.step(radiated, f1, 80);
      v = r2.step(v, f2, 120);
      v = r3.step(v, f3, 180);
      const double centre = std::max(ph.noise_hz, 1000.0);
      const double fr = fric.step(noise(rng), centre, 900) - 0.0;
      out[static_cast<std::size_t>(n)] = voiced_amp * v + noise_amp * fr * 0.3 + 1e-4 * noise(rng);
    }
  }
  double peak = 0.0;
  for (double x : out) peak = std::max(peak, std::abs(x));
  if (peak > 0.0) {
    for (double& x : out) x *= 0.5 / peak;
  }
  return out;
}

}  // namespace

Voice random_voice(const std::string& speaker_id, const std::string& gender, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Voice v;
  v.speaker_id = speaker_id;
  v.gender = gender;
  const bool female = gender == "f";
  v.f0_hz = female ? 180.0 + 60.0 * u(rng) : 95.0 + 40.0 * u(rng);
  v.formant_scale = female ? 1.08 + 0.12 * u(rng) : 0.88 + 0.12 * u(rng);
  v.tilt = 0.86 + 0.1 * u(rng);
  v.breathiness = 0.005 + 0.02 * u(rng);
  v.rate = 0.85 + 0.3 * u(rng);
  return v;
}

Utterance synthesize_utterance(const Voice& voice, const std::string& utterance_id, double seconds,
                               std::uint64_t seed, bool continuous) {
  if (!(seconds > 0.0)) throw UsageError("utterance length must be positive");
  std::mt19937_64 rng(seed);
  const auto phones = plan_phones(voice, seconds, continuous, rng);
  Utterance u;
  u.clip.samples = render(voice, phones, rng);
  u.clip.speaker_id = voice.speaker_id;
  u.clip.utterance_id = utterance_id;
  u.labels = make_labels(phones);
  return u;
}

CorpusSpec desk_corpus_spec(int base_per_gender, double base_seconds, int adapt_per_gender,
                            double adapt_seconds, std::uint64_t seed, const std::string& prefix) {
  CorpusSpec spec;
  spec.seed = seed;
  std::uint64_t k = 0;
  for (const std::string gender : {"f", "m"}) {
    for (int i = 0; i < base_per_gender + adapt_per_gender; ++i) {
      const bool base = i < base_per_gender;
      std::ostringstream id;
      id << prefix << '_' << gender << (i + 1 < 10 ? "0" : "") << i + 1;
      spec.speakers.push_back(
          {random_voice(id.str(), gender, seed * 1000 + (++k)), base ? base_seconds : adapt_seconds});
    }
  }
  return spec;
}

void write_corpus(const std::filesystem::path& root, const CorpusSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  const auto schema = conditioning::FeatureSchema::standard(kPhoneVocab);
  schema.save(root / "schema.txt");
  std::ostringstream table;
  std::uint64_t utt_seed = spec.seed * 7919;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(0.7, 1.3);
  for (const auto& plan : spec.speakers) {
    table << plan.voice.speaker_id << '\t' << plan.voice.gender << '\n';
    const auto dir = root / plan.voice.speaker_id;
    fs::create_directories(dir);
    double produced = 0.0;
    int index = 0;
    while (produced < plan.seconds) {
      std::ostringstream id;
      id << plan.voice.speaker_id << '_';
      id.width(4);
      id.fill('0');
      id << ++index;
      const double len = spec.utterance_seconds * jitter(rng);
      const auto utt = synthesize_utterance(plan.voice, id.str(), len, ++utt_seed);
      audio::save_waveform(dir / (id.str() + ".wav"), utt.clip);
      write_text_file(dir / (id.str() + ".lab"), conditioning::format_labels(utt.labels, schema));
      produced += utt.clip.duration();
    }
  }
  write_text_file(root / "speakers.tsv", table.str());
}

}  // namespace samplernn::synthetic
