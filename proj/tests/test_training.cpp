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
#include <limits>
#include <random>

#include "samplernn/error.hpp"
#include "samplernn/training.hpp"
#include "support.hpp"

using namespace samplernn;
using namespace samplernn::training;

namespace {

// Reference plateau schedule written from the rule, not the class.
struct ScheduleOracle {
  double lr, best = std::numeric_limits<double>::infinity();
  int patience, since_best = 0;
  std::vector<double> run(const std::vector<double>& losses) {
    std::vector<double> lrs;
    for (double v : losses) {
      if (best - v >= 1e-4) {
        best = v;
        since_best = 0;
      } else if (++since_best == patience) {
        lr /= 2.0;
        since_best = 0;
      }
      lrs.push_back(lr);
    }
    return lrs;
  }
};

// Speaker-specific tone with noise, so the model has something to learn.
UtteranceData tone_utterance(const std::string& speaker, const std::string& id, double hz,
                             double seconds, const conditioning::FeatureLayout& layout,
                             std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(seconds * 16000);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 0.4 * std::sin(2.0 * 3.14159265358979 * hz * static_cast<double>(i) / 16000.0) +
           noise(rng);
  }
  UtteranceData u;
  u.speaker = speaker;
  u.utterance = id;
  u.codes = audio::mulaw_encode(x);
  u.codes.source = id;
  const std::size_t frames = (n + 79) / 80;
  for (std::size_t f = 0; f < frames; ++f) u.frames.push_back(testing::random_frame(layout, rng));
  return u;
}

struct TinyData {
  model::ModelSpec spec = testing::micro_spec(16, 8, model::SpeakerMode::kOneHotTable);
  std::vector<UtteranceData> train, validation;
  std::map<std::string, SpeakerEmbedding> embeddings;

  TinyData() {
    std::mt19937_64 rng(12);
    for (int k = 0; k < 4; ++k) {
      train.push_back(tone_utterance("a", "a" + std::to_string(k), 220.0, 0.3, spec.layout, rng));
      train.push_back(tone_utterance("b", "b" + std::to_string(k), 330.0, 0.3, spec.layout, rng));
    }
    validation.push_back(tone_utterance("a", "av", 220.0, 0.2, spec.layout, rng));
    validation.push_back(tone_utterance("b", "bv", 330.0, 0.2, spec.layout, rng));
    embeddings["a"] = testing::table_speaker(0, "a");
    embeddings["b"] = testing::table_speaker(1, "b");
  }
};

TrainConfig tiny_config(int epochs) {
  TrainConfig c;
  c.batch_size = 4;
  c.initial_learning_rate = 3e-3;
  c.epochs = epochs;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("default training configuration") {
  const TrainConfig c;
  CHECK(c.batch_size == 128);
  CHECK(c.initial_learning_rate == 1e-4);
  CHECK(c.patience == 3);
  CHECK(c.scale_factor == 0.5);
  CHECK(c.epochs == 50);
  KeyValueConfig kv;
  c.to_config(kv);
  const auto back = TrainConfig::from_config(kv);
  CHECK(back.batch_size == 128);
  CHECK(back.initial_learning_rate == 1e-4);
  kv.set("learning_scaling_factor", "1.5");
  CHECK_THROWS_AS(TrainConfig::from_config(kv), UsageError);
}

TEST_CASE("scheduler: worsening validation halves once within five epochs") {
  PlateauScheduler s(1e-4, 3, 0.5, 1e-4);
  const std::vector<double> losses{3.0, 3.1, 3.2, 3.3, 3.4};
  int halvings = 0;
  std::vector<double> lrs;
  for (double v : losses) {
    halvings += s.observe(v);
    lrs.push_back(s.lr());
  }
  CHECK(halvings == 1);
  CHECK(lrs == std::vector<double>{1e-4, 1e-4, 1e-4, 5e-5, 5e-5});
  for (int i = 0; i < 3; ++i) s.observe(4.0);
  CHECK(s.lr() == doctest::Approx(2.5e-5).epsilon(1e-12));
}

TEST_CASE("scheduler: improvements below the threshold do not count") {
  PlateauScheduler s(1.0, 2, 0.5, 1e-4);
  s.observe(2.0);
  CHECK(s.improved());
  s.observe(2.0 - 5e-5);
  CHECK(!s.improved());
  s.observe(2.0 - 9e-5);
  CHECK(s.lr() == 0.5);
  s.observe(1.0);
  CHECK(s.improved());
  CHECK(s.bad_epochs() == 0);
  CHECK_THROWS_AS(PlateauScheduler(1.0, 0, 0.5, 0.0), UsageError);
  CHECK_THROWS_AS(PlateauScheduler(1.0, 3, 1.0, 0.0), UsageError);
}

TEST_CASE("scheduler matches the reference on random sequences") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const int patience = std::uniform_int_distribution<int>(1, 5)(rng);
    std::vector<double> losses;
    double v = 5.0;
    const int n = std::uniform_int_distribution<int>(1, 40)(rng);
    for (int i = 0; i < n; ++i) {
      // Mix of clear improvements, ties, sub-threshold moves and regressions.
      switch (rng() % 4) {
        case 0: v -= 0.1; break;
        case 1: v -= 3e-5; break;
        case 2: break;
        default: v += 0.2; break;
      }
      losses.push_back(v);
    }
    PlateauScheduler s(1e-4, patience, 0.5, 1e-4);
    ScheduleOracle oracle{1e-4, std::numeric_limits<double>::infinity(), patience};
    const auto expected = oracle.run(losses);
    double prev = 1e-4;
    int since_improvement = 0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
      const bool reduced = s.observe(losses[i]);
      CHECK(s.lr() == doctest::Approx(expected[i]).epsilon(1e-15));
      CHECK(s.lr() <= prev);
      since_improvement = s.improved() ? 0 : since_improvement + 1;
      if (reduced) CHECK(since_improvement >= patience);
      prev = s.lr();
    }
  }
}

TEST_CASE("run log csv") {
  RunLog log;
  log.epochs.push_back({0, std::numeric_limits<double>::quiet_NaN(), 5.5, 1e-4, 1.0});
  log.epochs.push_back({1, 4.25, 4.5, 1e-4, 2.0});
  log.epochs.push_back({2, 3.125, 4.75, 5e-5, 2.0});
  log.best_epoch = 1;
  const auto csv = log.to_csv();
  CHECK(csv.rfind("epoch,train_nll,val_nll,lr\n", 0) == 0);
  const auto back = RunLog::from_csv(csv);
  REQUIRE(back.epochs.size() == 3);
  CHECK(std::isnan(back.epochs[0].train_nll));
  CHECK(back.epochs[1].train_nll == 4.25);
  CHECK(back.epochs[2].lr == 5e-5);
  CHECK(back.best_epoch == 1);
  CHECK(back.best_val_nll() == 4.5);
  CHECK(back.to_csv() == csv);
}

TEST_CASE("variants") {
  const auto grid = Variant::grid();
  CHECK(grid.size() == 4);
  for (const auto& v : grid) CHECK(Variant::parse(v.name()) == v);
  CHECK(Variant::parse("onehot-nof0uv").speaker == model::SpeakerMode::kOneHotTable);
  CHECK_THROWS_AS(Variant::parse("onehot"), UsageError);
  CHECK_THROWS_AS(Variant::parse("encoder-pitch"), UsageError);

  const auto layout = testing::micro_spec(8, 4, model::SpeakerMode::kEncoder).layout;
  const std::vector<std::string> speakers{"a", "b"};
  const auto with = variant_spec({model::SpeakerMode::kEncoder, true}, {}, layout, speakers);
  const auto without = variant_spec({model::SpeakerMode::kEncoder, false}, {}, layout, speakers);
  CHECK(with.layout.dim() == without.layout.dim() + 2);
  const model::SampleRnn<double> mw(with, 1), mo(without, 1);
  CHECK(mw.params().w_cond.cols() == mo.params().w_cond.cols() + 2);

  std::map<std::string, SpeakerEmbedding> cached{{"a", testing::vector_speaker(100, 1, "a")}};
  CHECK_THROWS_AS(variant_embeddings({model::SpeakerMode::kEncoder, true}, speakers, cached),
                  DataError);
  const auto table = variant_embeddings({model::SpeakerMode::kOneHotTable, true}, speakers, {});
  CHECK(std::get<OneHotProvenance>(table.at("b").provenance).index == 1);

  std::mt19937_64 rng(1);
  const std::vector<UtteranceData> data{tone_utterance("a", "x", 100.0, 0.1, layout, rng)};
  const auto stripped = without_f0uv(data, layout);
  CHECK(stripped[0].frames[0].values.size() + 2 == data[0].frames[0].values.size());
}

TEST_CASE("evaluate_nll is deterministic and uniform at initialization") {
  const TinyData d;
  model::SampleRnn<double> m(d.spec, 3);
  const double a = evaluate_nll(m, d.validation, d.embeddings);
  const double b = evaluate_nll(m, d.validation, d.embeddings);
  CHECK(a == b);
  CHECK(std::fabs(a / std::log(256.0) - 1.0) < 0.05);
  CHECK(evaluate_nll(m, d.validation, d.embeddings, 1) != a);
  CHECK_THROWS_AS(evaluate_nll(m, std::span<const UtteranceData>(), d.embeddings), DataError);
  std::map<std::string, SpeakerEmbedding> partial{{"a", d.embeddings.at("a")}};
  CHECK_THROWS_AS(evaluate_nll(m, d.validation, partial), DataError);
}

TEST_CASE("training run: improvement, checkpoints, reproducibility") {
  const TinyData d;
  testing::TempDir dir("train");
  model::SampleRnn<float> m(d.spec, 3);
  const auto log = train(m, d.train, d.validation, d.embeddings, tiny_config(4), dir / "run1");
  REQUIRE(log.epochs.size() == 5);
  for (std::size_t i = 0; i < log.epochs.size(); ++i) {
    CHECK(log.epochs[i].epoch == static_cast<int>(i));
    if (i > 0) CHECK(log.epochs[i].lr <= log.epochs[i - 1].lr);
  }
  CHECK(log.best_epoch >= 1);
  CHECK(log.best_val_nll() < log.epochs[0].val_nll);
  CHECK(std::filesystem::exists(dir / "run1" / "best.ckpt"));
  CHECK(std::filesystem::exists(dir / "run1" / "last.ckpt"));
  CHECK(testing::read_file(dir / "run1" / "runlog.csv") == log.to_csv());

  // Best checkpoint reproduces its validation NLL.
  const auto best = model::load_checkpoint<float>(dir / "run1" / "best.ckpt", &d.spec);
  CHECK(std::fabs(evaluate_nll(best, d.validation, d.embeddings) - log.best_val_nll()) < 1e-6);
  const auto last = model::load_checkpoint<float>(dir / "run1" / "last.ckpt", &d.spec);
  CHECK(std::fabs(evaluate_nll(last, d.validation, d.embeddings) -
                  evaluate_nll(m, d.validation, d.embeddings)) < 1e-6);

  // Same seeds, same data: same losses and the same CSV bytes.
  model::SampleRnn<float> again(d.spec, 3);
  const auto log2 = train(again, d.train, d.validation, d.embeddings, tiny_config(4), dir / "run2");
  for (std::size_t i = 0; i < log.epochs.size(); ++i) {
    if (i > 0) CHECK(std::fabs(log.epochs[i].train_nll - log2.epochs[i].train_nll) < 1e-6);
    CHECK(std::fabs(log.epochs[i].val_nll - log2.epochs[i].val_nll) < 1e-6);
  }
  CHECK(testing::read_file(dir / "run2" / "runlog.csv") ==
        testing::read_file(dir / "run1" / "runlog.csv"));
}

TEST_CASE("overfitting a tiny set leaves train NLL at or below validation NLL") {
  const TinyData d;
  testing::TempDir dir("gap");
  model::SampleRnn<float> m(d.spec, 4);
  const auto small = std::span<const UtteranceData>(d.train).first(2);
  auto cfg = tiny_config(12);
  cfg.initial_learning_rate = 5e-3;
  train(m, small, d.validation, d.embeddings, cfg, dir.path());
  CHECK(evaluate_nll(m, small, d.embeddings) <= evaluate_nll(m, d.validation, d.embeddings));
}

TEST_CASE("non-finite parameters abort training") {
  const TinyData d;
  testing::TempDir dir("nan");
  model::SampleRnn<float> m(d.spec, 3);
  m.params().w_out(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(train(m, d.train, d.validation, d.embeddings, tiny_config(1), dir.path()),
                  NumericalError);
}

TEST_CASE("training input errors") {
  const TinyData d;
  testing::TempDir dir("errors");
  model::SampleRnn<float> m(d.spec, 3);
  CHECK_THROWS_AS(train(m, std::span<const UtteranceData>(), d.validation, d.embeddings,
                        tiny_config(1), dir.path()),
                  DataError);
  CHECK_THROWS_AS(train(m, d.train, std::span<const UtteranceData>(), d.embeddings,
                        tiny_config(1), dir.path()),
                  DataError);
}

TEST_CASE("grid trains four variants on shared data") {
  const TinyData d;
  testing::TempDir dir("grid");
  GridInputs in;
  in.model_config = d.spec.config;
  in.layout = d.spec.layout;
  in.speakers = {"a", "b"};
  in.train = d.train;
  in.validation = d.validation;
  in.encoder_embeddings = {{"a", testing::vector_speaker(100, 1, "a")},
                           {"b", testing::vector_speaker(100, 2, "b")}};
  auto cfg = tiny_config(1);
  cfg.max_train_windows = 4;
  const auto logs = run_grid(in, cfg, dir.path());
  REQUIRE(logs.size() == 4);
  for (const auto& v : Variant::grid()) {
    CHECK(std::filesystem::exists(dir / v.name() / "runlog.csv"));
    const auto info = model::read_checkpoint_info(dir / v.name() / "last.ckpt");
    CHECK(info.spec.speaker_mode == v.speaker);
    CHECK(info.spec.layout.f0uv == v.f0uv);
  }
  in.encoder_embeddings.erase("b");
  CHECK_THROWS_AS(run_grid(in, cfg, dir / "again"), DataError);
}

}  // TEST_SUITE
