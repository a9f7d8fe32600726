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
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

#include "mini_experiment.hpp"
#include "samplernn/datasets.hpp"
#include "samplernn/error.hpp"
#include "samplernn/pipeline.hpp"
#include "samplernn/plot.hpp"
#include "support.hpp"

using namespace samplernn;
namespace fs = std::filesystem;

namespace {

// Routes log output into a string for the lifetime of the object.
class LogCapture {
 public:
  LogCapture() : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(out_);
    spdlog::set_default_logger(std::make_shared<spdlog::logger>("capture", sink));
  }
  ~LogCapture() { spdlog::set_default_logger(previous_); }
  std::string text() const { return out_.str(); }

 private:
  std::ostringstream out_;
  std::shared_ptr<spdlog::logger> previous_;
};

std::map<fs::path, fs::file_time_type> mtimes(const fs::path& dir) {
  std::map<fs::path, fs::file_time_type> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[e.path()] = e.last_write_time();
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1, help with 0") {
  CHECK(pipeline::run_cli(std::vector<std::string>{"frobnicate"}) == 1);
  CHECK(pipeline::run_cli(std::vector<std::string>{"prepare"}) == 1);
  CHECK(pipeline::run_cli(std::vector<std::string>{"train", "--variant"}) == 1);
  CHECK(pipeline::run_cli(std::vector<std::string>{}) == 1);
  CHECK(pipeline::run_cli(std::vector<std::string>{"--help"}) == 0);
  testing::TempDir dir("usage");
  std::ofstream(dir / "bad.cfg") << "not_a_key = 3\n";
  CHECK(pipeline::run_cli(std::vector<std::string>{"prepare", "--corpus", dir.path().string(), "--out",
                                                   (dir / "e").string(), "--config",
                                                   (dir / "bad.cfg").string()}) == 1);
}

TEST_CASE("missing artifacts name the producing command and exit with 2") {
  testing::TempDir dir("missing");
  LogCapture log;
  CHECK(pipeline::run_cli(std::vector<std::string>{"train", "-m", dir.path().string()}) == 2);
  CHECK(log.text().find("samplernn prepare") != std::string::npos);
  CHECK(pipeline::run_cli(std::vector<std::string>{"plot", "--input", (dir / "x.csv").string(),
                                                   "--out", (dir / "x.svg").string()}) == 2);
}

TEST_CASE("configuration defaults") {
  const auto c = pipeline::default_config();
  CHECK(c.get_int("gru_hidden_size", 0) == 1024);
  CHECK(c.get_int("batch_size", 0) == 128);
  CHECK(c.get_double("initial_learning_rate", 0) == 1e-4);
  CHECK(c.get_int("learning_rate_patience", 0) == 3);
  CHECK(c.get_double("learning_scaling_factor", 0) == 0.5);
  CHECK(c.get_double_list("seed_lengths", {}) == std::vector<double>{1, 10, 60, 120});
  CHECK(pipeline::desk_scale_overrides().get_int("gru_hidden_size", 0) == 64);
  for (const auto& [k, v] : c.entries()) CHECK(pipeline::known_config_keys().count(k) == 1);
}

TEST_CASE("workflow on a tiny corpus") {
  testing::TempDir dir("workflow");
  testing::MiniExperiment mini{dir.path(), {}};
  mini.write_overrides();
  REQUIRE(mini.make_corpus() == 0);

  // An utterance without labels is excluded and reported.
  const auto some_lab = [&] {
    for (const auto& e : fs::recursive_directory_iterator(mini.corpus())) {
      if (e.path().extension() == ".lab") return e.path();
    }
    return fs::path();
  }();
  REQUIRE(!some_lab.empty());
  const std::string orphan = some_lab.stem().string();
  fs::remove(some_lab);

  REQUIRE(mini.prepare() == 0);
  const auto report = testing::read_file(mini.exp() / "prepare_report.txt");
  CHECK(report.find("excluded") != std::string::npos);
  CHECK(report.find(orphan + ".wav") != std::string::npos);
  CHECK(report.find("seed\t3") != std::string::npos);
  CHECK(testing::read_file(mini.exp() / "experiment.cfg").find("seed = 3") != std::string::npos);
  const auto exp = pipeline::Experiment::open(mini.exp());
  CHECK(exp.plan().seed == 3);
  CHECK(exp.plan().base_speakers.size() == 2);
  CHECK(exp.plan().adaptation_speakers.size() == 2);

  SUBCASE("prepare is idempotent") {
    const auto before = mtimes(mini.exp());
    REQUIRE(mini.prepare() == 0);
    CHECK(mtimes(mini.exp()) == before);
  }

  SUBCASE("encoder embeddings are required before training the encoder variant") {
    LogCapture log;
    CHECK(pipeline::run_cli(std::vector<std::string>{"train", "-m", mini.exp().string(), "--variant",
                                                     "encoder-f0uv"}) == 2);
    CHECK(log.text().find("extract-embeddings") != std::string::npos);
    CHECK(pipeline::run_cli(std::vector<std::string>{"evaluate", "-m", mini.exp().string()}) == 2);
    CHECK(log.text().find("samplernn train") != std::string::npos);
  }

  SUBCASE("full chain, unseen speaker synthesis and default seed lengths") {
    const std::string unseen = exp.plan().adaptation_speakers.front();
    const std::string utt = exp.plan().select(unseen, datasets::Split::kAdaptTest).front().utterance;
    mini.downstream(unseen, utt);
    CHECK(mini.failures.empty());
    for (const auto& f : mini.failures) MESSAGE(f);
    CHECK(fs::exists(mini.root / "unseen.wav"));
    const auto curve = evaluation::parse_curve_csv(
        testing::read_file(mini.run_dir() / "adaptation_curve.csv"));
    REQUIRE(curve.size() == 4);
    CHECK(curve[0].seed_seconds == 1.0);
    CHECK(curve[1].seed_seconds == 10.0);
    CHECK(curve[2].seed_seconds == 60.0);
    CHECK(curve[3].seed_seconds == 120.0);
    const auto speakers_csv = testing::read_file(mini.run_dir() / "adaptation_speakers.csv");
    CHECK(std::count(speakers_csv.begin(), speakers_csv.end(), '\n') == 1 + 2 * 4);
    const auto svg = testing::read_file(mini.run_dir() / "adaptation.svg");
    CHECK(svg.find("MCD") != std::string::npos);
    CHECK(svg.find("RMSE") != std::string::npos);
    CHECK(fs::exists(mini.run_dir() / "distortion.csv"));
    CHECK(fs::exists(mini.run_dir() / "eval_test_utterances.csv"));

    // A table-conditioned model cannot take an unseen speaker.
    CHECK(mini.run({"train", "-m", mini.exp().string(), "--variant", "onehot-f0uv", "--log-level",
                    "warn"}) == 0);
    LogCapture log;
    CHECK(pipeline::run_cli(std::vector<std::string>{
              "synthesize", "-m", mini.exp().string(), "--variant", "onehot-f0uv", "--utterance",
              utt, "--max-seconds", "0.1"}) == 2);
  }
}

TEST_CASE("plot emits one figure per CSV kind") {
  testing::TempDir dir("plot");
  training::RunLog log;
  log.epochs.push_back({0, std::nan(""), 5.5, 1e-4, 0});
  log.epochs.push_back({1, 4.0, 4.5, 1e-4, 0});
  std::ofstream(dir / "runlog.csv") << log.to_csv();
  CHECK(pipeline::run_cli(std::vector<std::string>{"plot", "--input", (dir / "runlog.csv").string(),
                                                   "--out", (dir / "loss.svg").string()}) == 0);
  const auto svg = testing::read_file(dir / "loss.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  evaluation::DistortionReport r;
  r.utterances.push_back({"s", "u", 1.0, 7.0, 30.0, 100, 50});
  r.utterances.push_back({"s", "u", 10.0, 6.0, 25.0, 100, 50});
  r.aggregate();
  std::ofstream(dir / "curve.csv") << r.curve_csv();
  CHECK(pipeline::run_cli(std::vector<std::string>{"plot", "--input", (dir / "curve.csv").string(),
                                                   "--out", (dir / "curve.svg").string()}) == 0);
  const auto curve_svg = testing::read_file(dir / "curve.svg");
  CHECK(curve_svg.find("MCD") != std::string::npos);
  CHECK(curve_svg.find("RMSE") != std::string::npos);

  const std::vector<plot::EpochDistortion> rows{{1, 8.0, 120.0}, {2, 7.5, 110.0}};
  const auto text = plot::epoch_distortion_csv(rows);
  const auto back = plot::parse_epoch_distortion_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].mcd_db == 7.5);
  std::ofstream(dir / "mixed.csv") << "a,b\n1,2\n";
  CHECK(pipeline::run_cli(std::vector<std::string>{"plot", "--input", (dir / "mixed.csv").string(),
                                                   "--out", (dir / "m.svg").string()}) == 2);
  CHECK(pipeline::run_cli(std::vector<std::string>{"plot", "--input", (dir / "runlog.csv").string(),
                                                   "--input", (dir / "curve.csv").string(), "--out",
                                                   (dir / "m.svg").string()}) == 1);
}

}  // TEST_SUITE
