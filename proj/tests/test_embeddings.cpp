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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "samplernn/embeddings.hpp"
#include "samplernn/encoder.hpp"
#include "samplernn/error.hpp"
#include "samplernn/synthetic.hpp"
#include "support.hpp"

using namespace samplernn;
using namespace samplernn::embeddings;

namespace {

EncoderFrames random_frames(int dim, int count, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 2.0);
  EncoderFrames f;
  f.frames = Eigen::MatrixXd::NullaryExpr(dim, count, [&] { return n(rng); });
  return f;
}

// Independent mean: per-dimension long double accumulation.
std::vector<long double> mean_oracle(const std::vector<const EncoderFrames*>& sets) {
  std::vector<long double> sum(sets.front()->dim(), 0.0L);
  long count = 0;
  for (const auto* s : sets) {
    for (int n = 0; n < s->count(); ++n) {
      for (int d = 0; d < s->dim(); ++d) sum[d] += s->frames(d, n);
    }
    count += s->count();
  }
  for (auto& v : sum) v /= count;
  return sum;
}

std::vector<audio::WaveformClip> pool_of(const std::string& speaker, int utterances, double seconds,
                                         std::uint64_t seed) {
  const auto voice = synthetic::random_voice(speaker, "f", seed);
  std::vector<audio::WaveformClip> pool;
  for (int u = 0; u < utterances; ++u) {
    pool.push_back(synthetic::synthesize_utterance(voice, speaker + "_" + std::to_string(u),
                                                   seconds, seed * 100 + u, true)
                       .clip);
  }
  return pool;
}

audio::WaveformClip noise_clip(std::int64_t n, std::uint64_t seed, const std::string& utt = "n") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = g(rng);
  return testing::clip_of(std::move(x), "spk", utt);
}

}  // namespace

TEST_SUITE("embeddings") {

TEST_CASE("average of constant frames is the frame") {
  EncoderFrames f;
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(kEmbeddingSize, -3.0, 5.0);
  f.frames = v.replicate(1, 37);
  const auto e = average_embedding(f, "s", EncoderProvenance{"seed", 0.37});
  CHECK((e.vector - v).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(e.vector.size() == kEmbeddingSize);
  CHECK(std::get<EncoderProvenance>(e.provenance).seed_id == "seed");
}

TEST_CASE("two-frame arithmetic mean") {
  EncoderFrames f;
  f.frames = Eigen::MatrixXd::Zero(kEmbeddingSize, 2);
  f.frames(0, 0) = 1.0;
  f.frames(0, 1) = 3.0;
  CHECK(average_embedding(f, "s", EncoderProvenance{}).vector[0] == 2.0);
}

TEST_CASE("average matches an accumulation oracle, ignores order, and pools linearly") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int la = std::uniform_int_distribution<int>(1, 300)(rng);
    const int lb = std::uniform_int_distribution<int>(1, 300)(rng);
    const auto a = random_frames(kEmbeddingSize, la, rng);
    const auto b = random_frames(kEmbeddingSize, lb, rng);
    const auto ea = average_embedding(a, "s", EncoderProvenance{});
    const auto eb = average_embedding(b, "s", EncoderProvenance{});
    const auto oracle = mean_oracle({&a});
    for (int d = 0; d < kEmbeddingSize; ++d) {
      CHECK(std::fabs(ea.vector[d] - static_cast<double>(oracle[d])) < 1e-9);
    }

    EncoderFrames shuffled = a;
    std::vector<int> perm(la);
    for (int i = 0; i < la; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < la; ++i) shuffled.frames.col(i) = a.frames.col(perm[i]);
    CHECK((average_embedding(shuffled, "s", EncoderProvenance{}).vector - ea.vector)
              .cwiseAbs()
              .maxCoeff() < 1e-9);

    EncoderFrames joined;
    joined.frames.resize(kEmbeddingSize, la + lb);
    joined.frames << a.frames, b.frames;
    const Eigen::VectorXd expect = (la * ea.vector + lb * eb.vector) / static_cast<double>(la + lb);
    const auto ej = average_embedding(joined, "s", EncoderProvenance{});
    CHECK((ej.vector - expect).cwiseAbs().maxCoeff() < 1e-9);
    const std::vector<EncoderFrames> parts{a, b};
    CHECK((average_embedding(parts, "s", EncoderProvenance{}).vector - expect).cwiseAbs().maxCoeff() <
          1e-9);
  }
}

TEST_CASE("average of no frames is an error") {
  EncoderFrames empty;
  empty.frames.resize(kEmbeddingSize, 0);
  CHECK_THROWS_AS(average_embedding(empty, "s", EncoderProvenance{}), DataError);
  CHECK_THROWS_AS(average_embedding(std::span<const EncoderFrames>(), "s", EncoderProvenance{}),
                  DataError);
}

TEST_CASE("seed sampling") {
  const auto pool = pool_of("spk", 4, 30.0, 3);
  std::int64_t pool_samples = 0;
  for (const auto& c : pool) pool_samples += static_cast<std::int64_t>(c.samples.size());
  REQUIRE(pool_samples >= 120 * 16000);

  SUBCASE("one second") {
    const auto s = sample_seed(pool, 1.0, 5);
    CHECK(s.chunks.size() == 1);
    CHECK(s.num_samples() == 16000);
    CHECK(s.speaker_id == "spk");
  }
  SUBCASE("reproducible and seed dependent") {
    const auto a = sample_seed(pool, 10.0, 9);
    const auto b = sample_seed(pool, 10.0, 9);
    const auto c = sample_seed(pool, 10.0, 10);
    REQUIRE(a.chunks.size() == b.chunks.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.chunks.size(); ++i) {
      CHECK(a.chunks[i].samples == b.chunks[i].samples);
      CHECK(a.chunks[i].offset == b.chunks[i].offset);
      differs |= a.chunks[i].utterance_id != c.chunks[i].utterance_id ||
                 a.chunks[i].offset != c.chunks[i].offset;
    }
    CHECK(a.id == b.id);
    CHECK(differs);
  }
  SUBCASE("chunks come from the pool and never repeat") {
    for (double t : {1.0, 10.0, 60.0, 2.5}) {
      const auto s = sample_seed(pool, t, 21);
      CHECK(std::fabs(s.seconds() - t) <= 0.01 * t);
      std::set<std::pair<std::string, std::int64_t>> seen;
      for (const auto& ch : s.chunks) {
        CHECK(seen.insert({ch.utterance_id, ch.offset}).second);
        const auto src = std::find_if(pool.begin(), pool.end(), [&](const audio::WaveformClip& c) {
          return c.utterance_id == ch.utterance_id;
        });
        REQUIRE(src != pool.end());
        CHECK(ch.offset % 16000 == 0);
        CHECK(std::equal(ch.samples.begin(), ch.samples.end(), src->samples.begin() + ch.offset));
      }
    }
  }
  SUBCASE("exhaustion takes every whole second") {
    std::int64_t whole = 0;
    for (const auto& c : pool) whole += static_cast<std::int64_t>(c.samples.size()) / 16000;
    const auto s = sample_seed(pool, static_cast<double>(whole), 4);
    CHECK(static_cast<std::int64_t>(s.chunks.size()) == whole);
    std::set<std::pair<std::string, std::int64_t>> seen;
    for (const auto& ch : s.chunks) seen.insert({ch.utterance_id, ch.offset});
    CHECK(static_cast<std::int64_t>(seen.size()) == whole);
  }
  SUBCASE("shortfall is named") {
    try {
      sample_seed(pool, 1000.0, 1);
      FAIL("expected a shortfall");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("short by") != std::string::npos);
    }
  }
  SUBCASE("bad requests") {
    CHECK_THROWS_AS(sample_seed(pool, 0.0, 1), UsageError);
    CHECK_THROWS_AS(sample_seed(std::span<const audio::WaveformClip>(), 1.0, 1), DataError);
    auto mixed = pool;
    mixed[1].speaker_id = "other";
    CHECK_THROWS_AS(sample_seed(mixed, 1.0, 1), DataError);
  }
}

TEST_CASE("one-hot table") {
  std::vector<std::string> ids;
  for (int i = 0; i < 40; ++i) ids.push_back("s" + std::to_string(i));
  OneHotTable t(ids, kEmbeddingSize, 3);
  CHECK(t.table().rows() == 100);
  CHECK(t.table().cols() == 40);
  CHECK(t.lookup(3).vector == t.lookup(3).vector);
  CHECK(std::get<OneHotProvenance>(t.lookup(3).provenance).index == 3);
  CHECK(t.lookup("s7").vector == t.table().col(7));
  CHECK_THROWS_AS(t.lookup(41), DataError);
  CHECK_THROWS_AS(t.lookup(-1), DataError);
  CHECK_THROWS_AS(t.lookup("unseen"), DataError);
  t.table().col(3).setConstant(0.5);
  CHECK(t.lookup(3).vector == Eigen::VectorXd::Constant(100, 0.5));
  CHECK_THROWS_AS(OneHotTable(ids, 0, 1), UsageError);
}

TEST_CASE("embedding files round trip exactly") {
  testing::TempDir dir("emb");
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  SpeakerEmbedding a{"spk_a", Eigen::VectorXd::NullaryExpr(100, [&] { return n(rng); }),
                     EncoderProvenance{"spk_a/T=60/seed=3", 60.0}};
  SpeakerEmbedding b{"spk_b", Eigen::VectorXd::NullaryExpr(100, [&] { return n(rng); }),
                     OneHotProvenance{4}};
  const std::vector<SpeakerEmbedding> all{a, b};
  save_embeddings(dir.path(), all);
  const auto back = load_embeddings(dir.path());
  REQUIRE(back.size() == 2);
  CHECK(back.at("spk_a").vector == a.vector);
  CHECK(back.at("spk_b").vector == b.vector);
  CHECK(std::get<EncoderProvenance>(back.at("spk_a").provenance).seconds == 60.0);
  CHECK(std::get<EncoderProvenance>(back.at("spk_a").provenance).seed_id == "spk_a/T=60/seed=3");
  CHECK(std::get<OneHotProvenance>(back.at("spk_b").provenance).index == 4);

  std::ofstream(dir / "bad.emb") << "samplernn-embedding 1\nspeaker\tx\ndim\t3\nvalues\t1\t2\n";
  CHECK_THROWS_AS(load_embedding(dir / "bad.emb"), DataError);
  std::ofstream(dir / "junk.emb") << "hello\n";
  CHECK_THROWS_AS(load_embedding(dir / "junk.emb"), DataError);
  CHECK_THROWS_AS(load_embeddings(dir / "missing"), DataError);
}

TEST_CASE("spectral statistics encoder") {
  MfccStatsEncoder enc;
  const auto one = noise_clip(16000, 1);
  const auto f = encode_frames(one, enc);
  CHECK(f.dim() == 100);
  CHECK(f.count() == 100);
  CHECK(f.frames == encode_frames(one, enc).frames);
  CHECK(encode_frames(noise_clip(16000 + 159, 1), enc).count() == 100);
  CHECK(encode_frames(noise_clip(24000, 1), enc).count() == 150);
  CHECK_THROWS_AS(encode_frames(noise_clip(100, 1), enc), DataError);
  auto wrong_rate = one;
  wrong_rate.sample_rate = 8000;
  CHECK_THROWS_AS(encode_frames(wrong_rate, enc), DataError);
}

TEST_CASE("convolutional encoder: decimation, determinism, locality, persistence") {
  ConvEncoder enc(default_conv_layers(), 4);
  CHECK(enc.decimation() == 160);
  CHECK(enc.dim() == 100);
  const auto one = noise_clip(16000, 2);
  const auto f1 = encode_frames(one, enc);
  CHECK(f1.count() == 100);
  CHECK(f1.dim() == 100);
  CHECK(f1.frames == encode_frames(one, enc).frames);

  // Frames whose receptive field ends inside the first second agree with the 1 s clip.
  auto two = one;
  const auto tail = noise_clip(16000, 3);
  two.samples.insert(two.samples.end(), tail.samples.begin(), tail.samples.end());
  const auto f2 = encode_frames(two, enc);
  CHECK(f2.count() == 200);
  int compared = 0;
  for (int n = 0; n < f1.count(); ++n) {
    if (n * 160 - enc.pad_left() + enc.receptive_field() > 16000) continue;
    CHECK((f1.frames.col(n) - f2.frames.col(n)).cwiseAbs().maxCoeff() < 1e-6);
    ++compared;
  }
  CHECK(compared >= 90);
  CHECK((f1.frames.col(99) - f2.frames.col(99)).cwiseAbs().maxCoeff() > 0.0);

  testing::TempDir dir("conv");
  enc.save(dir / "enc.bin");
  const auto loaded = ConvEncoder::load(dir / "enc.bin");
  CHECK(encode_frames(one, loaded).frames == f1.frames);
  const auto opened = open_encoder("conv:" + (dir / "enc.bin").string());
  CHECK(encode_frames(one, *opened).frames == f1.frames);
  CHECK_THROWS_AS(open_encoder("word2vec"), UsageError);
}

TEST_CASE("precomputed frames are sliced by chunk offset") {
  testing::TempDir dir("pre");
  std::mt19937_64 rng(8);
  auto all = random_frames(100, 300, rng);
  save_encoder_frames(dir / "utt1.frames", all);
  PrecomputedEncoder enc(dir.path());
  auto chunk = noise_clip(16000, 1, "utt1");
  chunk.offset = 32000;
  const auto f = encode_frames(chunk, enc);
  CHECK(f.count() == 100);
  CHECK(f.frames == all.frames.middleCols(200, 100));
  chunk.offset = 48000;
  CHECK_THROWS_AS(encode_frames(chunk, enc), DataError);
  auto other = noise_clip(16000, 1, "utt2");
  CHECK_THROWS_AS(encode_frames(other, enc), DataError);
  CHECK_THROWS_AS(PrecomputedEncoder(dir / "nope"), DataError);
}

TEST_CASE("seed embedding pools chunk frames and caching is transparent") {
  const auto pool = pool_of("spk", 2, 12.0, 6);
  const auto seed = sample_seed(pool, 5.0, 2);
  MfccStatsEncoder enc;
  const auto e = embed_seed(seed, enc);
  std::vector<EncoderFrames> frames;
  for (const auto& c : seed.chunks) frames.push_back(encode_frames(c, enc));
  std::vector<const EncoderFrames*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  const auto oracle = mean_oracle(ptrs);
  for (int d = 0; d < 100; ++d) CHECK(std::fabs(e.vector[d] - static_cast<double>(oracle[d])) < 1e-9);
  CHECK(std::get<EncoderProvenance>(e.provenance).seconds == 5.0);
  CachedEncoder cached(enc);
  CHECK(embed_seed(seed, cached).vector == e.vector);
  CHECK(embed_seed(seed, cached).vector == e.vector);
}

TEST_CASE("encoder training halves the MFCC worker loss on ten minutes of speech") {
  std::vector<audio::WaveformClip> corpus;
  for (int s = 0; s < 4; ++s) {
    const auto voice = synthetic::random_voice("s" + std::to_string(s), s % 2 ? "f" : "m", s + 1);
    for (int u = 0; u < 38; ++u) {
      corpus.push_back(
          synthetic::synthesize_utterance(voice, "u" + std::to_string(u), 4.0, 100 * s + u).clip);
    }
  }
  double seconds = 0.0;
  for (const auto& c : corpus) seconds += c.duration();
  REQUIRE(seconds >= 600.0);
  ConvEncoder enc(default_conv_layers(), 7);
  EncoderTrainConfig cfg;
  cfg.steps = 1000;
  cfg.log_every = 0;
  const auto report = train_encoder(enc, corpus, cfg);
  REQUIRE(report.workers.size() == 3);
  for (std::size_t i = 0; i < report.workers.size(); ++i) {
    INFO(to_string(report.workers[i]));
    CHECK(report.final_loss[i] < report.initial_loss[i]);
  }
  CHECK(report.workers[2] == Worker::kMfcc);
  CHECK(report.final_loss[2] <= 0.5 * report.initial_loss[2]);
  const auto clip = noise_clip(8000, 4);
  CHECK(encode_frames(clip, enc).frames == encode_frames(clip, enc).frames);
}

}  // TEST_SUITE
