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

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "samplernn/conditioning.hpp"
#include "samplernn/error.hpp"
#include "support.hpp"

using namespace samplernn;
using namespace samplernn::conditioning;

namespace {

FeatureSchema small_schema() {
  FeatureSchema s;
  s.features = {{"C-phone", FeatureKind::kCategorical, 10},
                {"stress", FeatureKind::kNumeric, 0},
                {"R-phone", FeatureKind::kCategorical, 10},
                {"pos", FeatureKind::kNumeric, 0}};
  return s;
}

PhonemeAnnotation phone(double start, double end, int a = 1, double x = 0.5) {
  PhonemeAnnotation p;
  p.start_time = start;
  p.end_time = end;
  p.categorical = {a, 2};
  p.numeric = {x, 1.0};
  return p;
}

}  // namespace

TEST_SUITE("conditioning") {

TEST_CASE("standard schema declares 53 answers") {
  const auto s = FeatureSchema::standard();
  CHECK(s.size() == 53);
  CHECK(s.num_categorical() == 5);
  CHECK(s.num_numeric() == 48);
  const auto layout = FeatureLayout::from_schema(s, true);
  CHECK(layout.dim() == 57);
  CHECK(FeatureLayout::from_schema(s, false).dim() == 55);
}

TEST_CASE("schema file round trip") {
  testing::TempDir dir("schema");
  const auto s = small_schema();
  s.save(dir / "schema.txt");
  const auto back = FeatureSchema::load(dir / "schema.txt");
  REQUIRE(back.size() == 4);
  CHECK(back.categorical_vocab() == std::vector<int>{10, 10});
  CHECK(back.features[1].name == "stress");
}

TEST_CASE("parse_labels reads phones in HTK time units") {
  const auto s = small_schema();
  const auto anns = parse_labels("0 1000000 3 0.5 4 -1\n1000000 3000000 4 0.25 5 2\n", s);
  REQUIRE(anns.size() == 2);
  CHECK(anns[0].duration() == doctest::Approx(0.1));
  CHECK(anns[1].duration() == doctest::Approx(0.2));
  CHECK(anns[1].categorical == std::vector<int>{4, 5});
  CHECK(anns[1].numeric == std::vector<double>{0.25, 2.0});
  CHECK(parse_labels("", s).empty());
  CHECK(parse_labels("# comment only\n\n", s).empty());
}

TEST_CASE("parse_labels errors name the line") {
  const auto s = small_schema();
  try {
    parse_labels("0 2000000 1 0 1 0\n1000000 3000000 1 0 1 0\n", s, "x.lab");
    FAIL("overlap accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("x.lab:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_labels("0 100 1 0 1\n", s), DataError);
  CHECK_THROWS_AS(parse_labels("0 100 11 0 1 0\n", s), DataError);
  CHECK_THROWS_AS(parse_labels("100 100 1 0 1 0\n", s), DataError);
}

TEST_CASE("format_labels round trip") {
  const auto s = small_schema();
  std::vector<PhonemeAnnotation> anns{phone(0.0, 0.125, 3, 0.1), phone(0.125, 0.5, 7, -2.5)};
  const auto back = parse_labels(format_labels(anns, s), s);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].start_time == anns[i].start_time);
    CHECK(back[i].end_time == anns[i].end_time);
    CHECK(back[i].categorical == anns[i].categorical);
    CHECK(back[i].numeric == anns[i].numeric);
  }
}

TEST_CASE("duration features of a 0.4 s phone") {
  const std::vector<PhonemeAnnotation> anns{phone(0.0, 0.4)};
  const auto d = append_duration_features(anns, 80, 16000);
  REQUIRE(d.size() == 80);
  for (std::size_t n = 0; n < d.size(); ++n) {
    CHECK(d[n].absolute == doctest::Approx(0.4));
    CHECK(d[n].relative == doctest::Approx((n + 0.5) / 80.0));
  }
  CHECK(d.front().relative == doctest::Approx(0.00625));
  CHECK(d.back().relative == doctest::Approx(0.99375));
}

TEST_CASE("duration features: relative duration rises within every phone") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> len(0.02, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PhonemeAnnotation> anns;
    double t = 0.0;
    for (int p = 0; p < 8; ++p) {
      const double e = t + len(rng);
      anns.push_back(phone(t, e));
      t = e;
    }
    const auto d = append_duration_features(anns, 80, 16000);
    REQUIRE(static_cast<double>(d.size()) == doctest::Approx(std::ceil(t / 0.005)).epsilon(1e-9));
    for (std::size_t n = 1; n < d.size(); ++n) {
      REQUIRE(d[n].phoneme >= d[n - 1].phoneme);
      if (d[n].phoneme == d[n - 1].phoneme) REQUIRE(d[n].relative > d[n - 1].relative);
    }
    for (const auto& f : d) {
      REQUIRE(f.relative >= 0.0);
      REQUIRE(f.relative <= 1.0);
      REQUIRE(f.absolute == doctest::Approx(anns[static_cast<std::size_t>(f.phoneme)].duration()));
    }
  }
}

TEST_CASE("duration features reject uncovered intervals") {
  const std::vector<PhonemeAnnotation> anns{phone(0.0, 0.1), phone(0.3, 0.4)};
  CHECK_THROWS_AS(append_duration_features(anns, 80, 16000), DataError);
}

TEST_CASE("remap_annotations follows trimmed samples") {
  const std::vector<PhonemeAnnotation> anns{phone(0.0, 0.1), phone(0.1, 0.6), phone(0.6, 0.7)};
  const std::vector<audio::Segment> removed{{3200, 8000}};  // 0.2 s to 0.5 s
  const auto m = remap_annotations(anns, removed, 16000);
  REQUIRE(m.size() == 3);
  CHECK(m[1].start_time == doctest::Approx(0.1));
  CHECK(m[1].end_time == doctest::Approx(0.3));
  CHECK(m[2].start_time == doctest::Approx(0.3));
  const std::vector<audio::Segment> swallow{{1600, 9600}};
  const std::vector<PhonemeAnnotation> inner{phone(0.0, 0.1), phone(0.2, 0.5), phone(0.6, 0.7)};
  CHECK(remap_annotations(inner, swallow, 16000).size() == 2);
}

namespace {

std::vector<double> sawtooth(double hz, double seconds, double amplitude) {
  std::vector<double> out(static_cast<std::size_t>(seconds * 16000));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double phase = std::fmod(hz * static_cast<double>(i) / 16000.0, 1.0);
    out[i] = amplitude * (2.0 * phase - 1.0);
  }
  return out;
}

}  // namespace

TEST_CASE("F0 of a 200 Hz sawtooth") {
  const auto track = extract_f0_uv(testing::clip_of(sawtooth(200.0, 1.0, 0.5)));
  REQUIRE(track.size() == 200);
  int close = 0, voiced = 0;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (std::fabs(std::exp(track.log_f0[i]) / 200.0 - 1.0) <= 0.05) ++close;
    voiced += track.uv[i];
  }
  CHECK(close >= 180);
  CHECK(voiced >= 190);
}

TEST_CASE("F0 of noise and silence") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<double> x(16000);
  for (auto& v : x) v = n(rng);
  const auto noisy = extract_f0_uv(testing::clip_of(x));
  int unvoiced = 0;
  for (auto u : noisy.uv) unvoiced += (u == 0);
  CHECK(unvoiced >= 180);
  for (double v : noisy.log_f0) REQUIRE(std::isfinite(v));

  const auto silent = extract_f0_uv(testing::clip_of(std::vector<double>(8000, 0.0)));
  REQUIRE(silent.size() == 100);
  for (std::size_t i = 0; i < silent.size(); ++i) {
    CHECK(silent.uv[i] == 0);
    CHECK(silent.log_f0[i] == doctest::Approx(std::log(100.0)));
  }
}

TEST_CASE("unvoiced stretches are filled by interpolation") {
  auto x = sawtooth(150.0, 0.3, 0.5);
  const auto gap = std::vector<double>(4800, 0.0);
  const auto b = sawtooth(250.0, 0.3, 0.5);
  x.insert(x.end(), gap.begin(), gap.end());
  x.insert(x.end(), b.begin(), b.end());
  const auto t = extract_f0_uv(testing::clip_of(x));
  // Inside the gap logF0 lies between the neighbouring voiced values and moves monotonically.
  std::size_t first = 0, last = 0;
  for (std::size_t i = 70; i < 110; ++i) {
    if (t.uv[i] == 0) {
      if (first == 0) first = i;
      last = i;
    }
  }
  REQUIRE(first > 0);
  for (std::size_t i = first; i <= last; ++i) {
    CHECK(t.log_f0[i] >= std::log(150.0) - 0.05);
    CHECK(t.log_f0[i] <= std::log(250.0) + 0.05);
    if (i > first) CHECK(t.log_f0[i] >= t.log_f0[i - 1] - 1e-12);
  }
}

TEST_CASE("upsample_to_frames layout") {
  const auto s = small_schema();
  const auto layout = FeatureLayout::from_schema(s, true);
  const std::vector<PhonemeAnnotation> anns{phone(0.0, 0.1, 3, 0.7), phone(0.1, 0.4, 4, -0.2)};
  const auto d = append_duration_features(anns, 80, 16000);
  ProsodyTrack p;
  p.log_f0.assign(d.size(), std::log(120.0));
  p.uv.assign(d.size(), 1);
  const auto frames = upsample_to_frames(anns, d, &p, layout);
  REQUIRE(frames.size() == 80);
  const std::vector<double> first{3, 2, 0.7, 1.0, 0.1, 0.025, std::log(120.0), 1};
  REQUIRE(frames[0].dim() == first.size());
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(frames[0].values[i] == doctest::Approx(first[i]));
  CHECK(frames[79].values[0] == 4);
  CHECK(frames[79].values[layout.abs_duration_index()] == doctest::Approx(0.3));
  const auto without = drop_f0uv(frames, layout);
  CHECK(without[0].dim() + 2 == frames[0].dim());
  p.uv.pop_back();
  p.log_f0.pop_back();
  CHECK_THROWS_AS(upsample_to_frames(anns, d, &p, layout), DataError);
}

namespace {

FeatureLayout numeric_layout() {
  FeatureLayout l;
  l.categorical_vocab = {4};
  l.numeric = 2;
  l.f0uv = true;
  return l;  // [cat, n0, n1, abs, rel, logf0, uv]
}

ConditioningFrame frame(double cat, double n0, double n1, double abs, double rel, double lf0,
                        double uv) {
  return ConditioningFrame{{cat, n0, n1, abs, rel, lf0, uv}};
}

}  // namespace

TEST_CASE("speaker statistics: population moments and exclusions") {
  SpeakerStatsBuilder b(numeric_layout());
  const std::vector<ConditioningFrame> f{frame(1, 1.0, 3.0, 0.1, 0.2, 4.0, 1),
                                         frame(2, 3.0, 3.0, 0.2, 0.8, 5.0, 0)};
  b.add("s", "u", f);
  const auto stats = b.build();
  const auto& fs = stats.at("s");
  CHECK(fs.mean[1] == doctest::Approx(2.0));
  CHECK(fs.stddev[1] == doctest::Approx(1.0));
  CHECK(fs.included[1]);
  CHECK_FALSE(fs.included[0]);  // categorical
  CHECK_FALSE(fs.included[2]);  // constant
  CHECK_FALSE(fs.included[4]);  // relative duration
  CHECK_FALSE(fs.included[6]);  // UV flag
  CHECK(fs.included[5]);
  CHECK_THROWS_AS(stats.at("other"), DataError);
}

TEST_CASE("speaker statistics do not depend on visit order") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(3.0, 2.0);
  std::vector<std::vector<ConditioningFrame>> utts(12);
  for (auto& u : utts) {
    const int len = std::uniform_int_distribution<int>(5, 60)(rng);
    for (int i = 0; i < len; ++i) u.push_back(frame(1, n(rng), n(rng), n(rng), 0.5, n(rng), 1));
  }
  SpeakerStatsBuilder forward(numeric_layout()), shuffled(numeric_layout());
  std::vector<int> order(utts.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i : order) forward.add("s", "u" + std::to_string(100 + i), utts[i]);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i : order) shuffled.add("s", "u" + std::to_string(100 + i), utts[i]);
  const auto a = forward.build().at("s");
  const auto b = shuffled.build().at("s");
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);

  // Normalized training frames have zero mean and unit deviation.
  SpeakerStats stats;
  stats.speakers["s"] = a;
  std::vector<double> col;
  for (const auto& u : utts) {
    for (const auto& f : zscore_normalize(u, stats, "s")) col.push_back(f.values[1]);
  }
  double mean = 0.0, var = 0.0;
  for (double v : col) mean += v;
  mean /= static_cast<double>(col.size());
  for (double v : col) var += (v - mean) * (v - mean);
  var /= static_cast<double>(col.size());
  CHECK(std::fabs(mean) < 1e-6);
  CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-6);
}

TEST_CASE("z-normalization examples and round trip") {
  SpeakerStatsBuilder b(numeric_layout());
  b.add("s", "u", std::vector<ConditioningFrame>{frame(0, 1, 10, 0.1, 0.3, 4, 1),
                                                 frame(1, 3, 20, 0.3, 0.6, 5, 0)});
  const auto stats = b.build();
  const auto& fs = stats.at("s");
  const std::vector<ConditioningFrame> probe{
      frame(2, fs.mean[1], fs.mean[2] + fs.stddev[2], 0.2, 0.9, 4.2, 1)};
  const auto z = zscore_normalize(probe, stats, "s");
  CHECK(z[0].values[0] == 2);
  CHECK(z[0].values[1] == doctest::Approx(0.0));
  CHECK(z[0].values[2] == doctest::Approx(1.0));
  CHECK(z[0].values[4] == 0.9);
  CHECK(z[0].values[6] == 1);
  const auto back = zscore_denormalize(z, stats, "s");
  for (std::size_t d = 0; d < probe[0].dim(); ++d) {
    CHECK(std::fabs(back[0].values[d] - probe[0].values[d]) < 1e-9);
  }
  CHECK_THROWS_AS(zscore_normalize(probe, stats, "nobody"), DataError);
}

TEST_CASE("statistics and frames persistence") {
  testing::TempDir dir("stats");
  SpeakerStatsBuilder b(numeric_layout());
  b.add("s", "u", std::vector<ConditioningFrame>{frame(0, 1, 10, 0.1, 0.3, 4, 1),
                                                 frame(1, 3, 20, 0.3, 0.6, 5, 0)});
  const auto stats = b.build();
  stats.save(dir / "stats.tsv");
  const auto back = SpeakerStats::load(dir / "stats.tsv");
  CHECK(back.at("s").mean == stats.at("s").mean);
  CHECK(back.at("s").stddev == stats.at("s").stddev);
  CHECK(back.at("s").included == stats.at("s").included);

  const std::vector<ConditioningFrame> frames{frame(0, 0.1, 0.2, 0.3, 0.4, 0.5, 1)};
  save_frames(dir / "f.feat", frames);
  CHECK(load_frames(dir / "f.feat") == frames);
}

}  // TEST_SUITE
