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
#include <random>

#include "gradcheck.hpp"
#include "samplernn/error.hpp"
#include "samplernn/model.hpp"
#include "support.hpp"

using namespace samplernn;
using namespace samplernn::model;

namespace {

ModelSpec encoder_spec(int hidden = 16, int qe = 8) {
  return testing::micro_spec(hidden, qe, SpeakerMode::kEncoder);
}

ModelSpec table_spec(int hidden = 16, int qe = 8) {
  return testing::micro_spec(hidden, qe, SpeakerMode::kOneHotTable);
}

template <typename T>
double max_abs_diff(const nn::Matrix<T>& a, const nn::Matrix<T>& b) {
  return static_cast<double>((a - b).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("default configuration") {
  const ModelConfig c;
  CHECK(c.frame_size == 80);
  CHECK(c.seq_len == 13);
  CHECK(c.ratios == std::vector<int>{4, 20});
  CHECK(c.hidden_size == 1024);
  CHECK(c.speaker_embedding_size == 100);
  CHECK(c.global_features_size == 50);
  CHECK(c.categorical_embedding_size == 15);
  CHECK(c.quantization_levels == 256);
  CHECK(c.sample_order == 20);
  CHECK(c.window_samples() == 1040);
  CHECK(c.tier_frame_sizes() == std::vector<int>{80, 20});
  CHECK_NOTHROW(c.validate());
  ModelConfig bad = c;
  bad.ratios = {4, 10};
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.hidden_size = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("configuration keys round trip") {
  ModelConfig c;
  c.hidden_size = 64;
  c.code_embedding_size = 16;
  KeyValueConfig kv;
  c.to_config(kv);
  CHECK(kv.get_int("gru_hidden_size", 0) == 64);
  CHECK(kv.get_string("upsampling_ratios", "") == "4,20");
  CHECK(ModelConfig::from_config(kv) == c);
}

TEST_CASE("global conditioning") {
  std::mt19937_64 rng(1);
  SampleRnn<double> m(encoder_spec(), 7);
  const auto e = testing::vector_speaker(100, 2);
  const auto f = testing::random_frame(m.spec().layout, rng);
  const auto c = m.global_conditioning(e.vector, f);
  CHECK(c.size() == 50);
  CHECK(max_abs_diff<double>(c, m.global_conditioning(e.vector, f)) == 0.0);
  // [e ; expanded l]: 100 + 2 * 15 + (3 numeric + 2 durations + 2 prosody) columns.
  CHECK(m.params().w_cond.cols() == 100 + 30 + 7);
  m.params().w_cond.setZero();
  m.params().b_cond.setZero();
  CHECK(m.global_conditioning(e.vector, f).norm() == 0.0);
  ConditioningFrame shorter = f;
  shorter.values.pop_back();
  CHECK_THROWS_AS(m.global_conditioning(e.vector, shorter), DataError);
}

TEST_CASE("tier steps: ratios, determinism and live conditioning") {
  std::mt19937_64 rng(2);
  SampleRnn<double> m(encoder_spec(), 3);
  const auto e = testing::vector_speaker(100, 5);
  const auto c1 = m.global_conditioning(e.vector, testing::random_frame(m.spec().layout, rng));
  const auto c2 = m.global_conditioning(e.vector, testing::random_frame(m.spec().layout, rng));
  std::vector<double> frame(80), mid(20);
  for (auto& v : frame) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  std::copy(frame.end() - 20, frame.end(), mid.begin());
  const auto s0 = m.initial_state();
  const auto top = m.top_tier_step(frame, c1, s0.hidden[0]);
  CHECK(top.conditioning.rows() == 16);
  CHECK(top.conditioning.cols() == 4);
  const auto again = m.top_tier_step(frame, c1, s0.hidden[0]);
  CHECK(max_abs_diff<double>(top.conditioning, again.conditioning) == 0.0);
  CHECK(max_abs_diff<double>(top.state, again.state) == 0.0);
  CHECK(max_abs_diff<double>(top.conditioning, m.top_tier_step(frame, c2, s0.hidden[0]).conditioning) > 0.0);

  const nn::Vector<double> up = top.conditioning.col(0);
  const auto low = m.mid_tier_step(mid, up, c1, s0.hidden[1]);
  CHECK(low.conditioning.cols() == 20);
  CHECK(low.conditioning.rows() == 16);
  CHECK_THROWS_AS(m.top_tier_step(frame, c1, nn::Vector<double>::Zero(5)), DataError);

  // The upper vector feeds the tier input directly.
  CHECK(max_abs_diff<double>(low.state, m.mid_tier_step(mid, up * 2.0, c1, s0.hidden[1]).state) > 0.0);

  // With c's input columns zeroed and no upper vector, only samples and state matter.
  SampleRnn<double> ablated = m;
  auto& w_in = ablated.params().tiers[1].w_in;
  w_in.rightCols(w_in.cols() - 20).setZero();
  const auto z = nn::Vector<double>::Zero(16);
  const auto a = ablated.mid_tier_step(mid, z, c1, s0.hidden[1]);
  const auto b = ablated.mid_tier_step(mid, z, c2, s0.hidden[1]);
  CHECK(max_abs_diff<double>(a.state, b.state) == 0.0);
  CHECK(max_abs_diff<double>(a.conditioning, b.conditioning) == 0.0);
  auto other = mid;
  other[3] += 0.25;
  CHECK(max_abs_diff<double>(a.state, ablated.mid_tier_step(other, z, c1, s0.hidden[1]).state) > 0.0);
}

TEST_CASE("sample level distribution") {
  std::mt19937_64 rng(4);
  SampleRnn<double> m(encoder_spec(), 5);
  const auto e = testing::vector_speaker(100, 6);
  const auto c = m.global_conditioning(e.vector, testing::random_frame(m.spec().layout, rng));
  nn::Vector<double> sc = nn::Vector<double>::Random(16);
  const auto codes = testing::random_codes(40, rng);
  const std::span<const audio::Code> last(codes.data() + 20, 20);
  const auto p = m.sample_level_predict(last, sc, c);
  CHECK(p.size() == 256);
  CHECK(p.minCoeff() >= 0.0);
  CHECK(std::fabs(p.sum() - 1.0) < 1e-6);
  CHECK(max_abs_diff<double>(p, m.sample_level_predict(last, sc, c)) == 0.0);
  // Codes before the order-20 window cannot reach the prediction; codes inside it do.
  auto perturbed = codes;
  for (int i = 0; i < 20; ++i) perturbed[i] = static_cast<audio::Code>(255 - perturbed[i]);
  CHECK(max_abs_diff<double>(p, m.sample_level_predict({perturbed.data() + 20, 20}, sc, c)) == 0.0);
  for (int i = 20; i < 40; ++i) {
    auto q = codes;
    q[i] = static_cast<audio::Code>(q[i] ^ 0x40);
    CHECK(max_abs_diff<double>(p, m.sample_level_predict({q.data() + 20, 20}, sc, c)) > 0.0);
  }
  CHECK_THROWS_AS(m.sample_level_predict({codes.data(), 21}, sc, c), DataError);
}

TEST_CASE("window shape chain: 13 top steps, 52 mid steps, 1040 predictions") {
  std::mt19937_64 rng(8);
  SampleRnn<double> m(encoder_spec(), 9);
  const auto e = testing::vector_speaker(100, 1);
  const auto w = testing::random_window(m.spec(), rng);
  auto st = m.initial_state();
  const auto r = m.forward_training(w, e, st, nullptr, 1.0, true);
  CHECK(r.position_nll.size() == 1040);
  CHECK(r.probabilities.rows() == 256);
  CHECK(r.probabilities.cols() == 1040);
  for (Eigen::Index n = 0; n < 1040; ++n) {
    REQUIRE(std::fabs(r.probabilities.col(n).sum() - 1.0) < 1e-9);
    REQUIRE(r.position_nll(n) == doctest::Approx(-std::log(r.probabilities(w.target_codes[n], n))));
  }
  CHECK(r.mean_nll == doctest::Approx(r.position_nll.mean()));
  CHECK_FALSE(st.fresh);
  CHECK(st.hidden.size() == 2);
}

TEST_CASE("batched window pass equals the step-wise generation path") {
  std::mt19937_64 rng(12);
  for (auto mode : {SpeakerMode::kEncoder, SpeakerMode::kOneHotTable}) {
    SampleRnn<double> m(testing::micro_spec(12, 6, mode), 21);
    const auto e = mode == SpeakerMode::kEncoder ? testing::vector_speaker(100, 3)
                                                 : testing::table_speaker(1, "b");
    audio::QuantizedSequence q;
    q.codes = testing::random_codes(3 * 1040, rng);
    q.source = "u";
    const auto frames = testing::random_frames(m.spec().layout, 39, rng);
    const auto windows = audio::make_windows(q, frames, "b").windows;
    REQUIRE(windows.size() == 3);
    const auto reference = m.stepwise_log_probs(frames, e, q.codes);
    auto st = m.initial_state();
    double worst = 0.0;
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto r = m.forward_training(windows[k], e, st);
      for (int n = 0; n < 1040; ++n) {
        worst = std::max(worst, std::fabs(r.position_nll(n) + reference(static_cast<Eigen::Index>(k * 1040 + n))));
      }
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("teacher-forced predictions are causal") {
  std::mt19937_64 rng(14);
  SampleRnn<double> m(encoder_spec(), 2);
  const auto e = testing::vector_speaker(100, 9);
  const auto w = testing::random_window(m.spec(), rng);
  auto s0 = m.initial_state();
  const auto base = m.forward_training(w, e, s0, nullptr, 1.0, true);
  std::uniform_int_distribution<int> pos(1, 1038);
  for (int probe = 0; probe < 5; ++probe) {
    const int n = pos(rng);
    auto changed = w;
    for (int i = n + 1; i < 1040; ++i) changed.input_codes[i] = static_cast<audio::Code>(255 - changed.input_codes[i]);
    auto s1 = m.initial_state();
    const auto r = m.forward_training(changed, e, s1, nullptr, 1.0, true);
    CHECK(r.probabilities.leftCols(n + 1) == base.probabilities.leftCols(n + 1));
    CHECK(r.probabilities.col(n + 1) != base.probabilities.col(n + 1));
  }
}

TEST_CASE("initial NLL is close to uniform") {
  std::mt19937_64 rng(5);
  SampleRnn<float> m(testing::micro_spec(64, 16, SpeakerMode::kEncoder), 1);
  const auto e = testing::vector_speaker(100, 4);
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    auto st = m.initial_state();
    total += m.forward_training(testing::random_window(m.spec(), rng), e, st).mean_nll;
  }
  CHECK(std::fabs(total / 4 / std::log(256.0) - 1.0) < 0.05);
}

TEST_CASE("gradients match finite differences, including initial states") {
  std::mt19937_64 rng(31);
  for (auto mode : {SpeakerMode::kOneHotTable, SpeakerMode::kEncoder}) {
    SampleRnn<double> m(testing::micro_spec(8, 4, mode), 17);
    const auto e = mode == SpeakerMode::kEncoder ? testing::vector_speaker(100, 8)
                                                 : testing::table_speaker(1, "b");
    const auto w = testing::random_window(m.spec(), rng);
    for (const auto& g : testing::gradient_check(m, w, e, 4, 3)) {
      INFO(g.name);
      CHECK(g.relative < 1e-4);
      if (g.name.find("h0") != std::string::npos) CHECK(g.analytic_norm > 0.0);
    }
  }
}

TEST_CASE("carried state does not train the initial states") {
  std::mt19937_64 rng(3);
  SampleRnn<double> m(encoder_spec(8, 4), 1);
  const auto e = testing::vector_speaker(100, 1);
  auto st = m.initial_state();
  m.forward_training(testing::random_window(m.spec(), rng), e, st);
  auto grads = m.params().zeros_like();
  m.forward_training(testing::random_window(m.spec(), rng), e, st, &grads);
  for (const auto& t : grads.tiers) CHECK(t.h0.norm() == 0.0);
  CHECK(grads.tiers[0].w_hh.norm() > 0.0);
}

TEST_CASE("overfitting one window lowers the loss") {
  std::mt19937_64 rng(6);
  SampleRnn<float> m(testing::micro_spec(32, 8, SpeakerMode::kOneHotTable), 4);
  const auto e = testing::table_speaker(0, "a");
  const auto w = testing::random_window(m.spec(), rng);
  nn::Adam<float> adam;
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    auto grads = m.params().zeros_like();
    auto st = m.initial_state();
    const double loss = m.forward_training(w, e, st, &grads).mean_nll;
    if (step == 0) first = loss;
    last = loss;
    adam.step(m.params().named(), grads.named(), 3e-3);
  }
  CHECK(last < first - 0.5);
}

TEST_CASE("speaker resolution") {
  SampleRnn<double> table(table_spec(), 1);
  SampleRnn<double> enc(encoder_spec(), 1);
  CHECK(table.params().speaker_table.rows() == 100);
  CHECK(table.params().speaker_table.cols() == 2);
  CHECK(enc.params().speaker_table.size() == 0);
  const auto t1 = table.table_embedding(1);
  CHECK(max_abs_diff<double>(table.speaker_vector(t1), table.speaker_vector(table.table_embedding(1))) == 0.0);
  CHECK_THROWS_AS(table.speaker_vector(testing::table_speaker(2, "c")), DataError);
  CHECK_THROWS_AS(table.speaker_vector(testing::vector_speaker(100, 1)), DataError);
  CHECK_THROWS_AS(enc.speaker_vector(t1), DataError);
  CHECK_THROWS_AS(enc.speaker_vector(testing::vector_speaker(99, 1)), DataError);
}

TEST_CASE("generation length, determinism and live speaker conditioning") {
  std::mt19937_64 rng(10);
  SampleRnn<float> m(encoder_spec(), 11);
  const auto frames = testing::random_frames(m.spec().layout, 100, rng);
  const auto a = testing::vector_speaker(100, 1, "a");
  const auto b = testing::vector_speaker(100, 2, "b");
  const auto x = m.generate(frames, a, 42);
  CHECK(x.codes.size() == 8000);
  CHECK(m.generate(frames, a, 42).codes == x.codes);
  CHECK(m.generate(frames, b, 42).codes != x.codes);
  SamplingOptions argmax;
  argmax.mode = SamplingMode::kArgmax;
  CHECK(m.generate(frames, a, 1, argmax).codes == m.generate(frames, a, 2, argmax).codes);
  SamplingOptions zero;
  zero.temperature = 0.0;
  CHECK_THROWS_AS(m.generate(frames, a, 1, zero), UsageError);
}

TEST_CASE("argmax generation reproduces a memorized utterance") {
  // A two-tone signal the sample level can learn to continue exactly.
  std::vector<double> x(2080);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = 0.4 * std::sin(2 * M_PI * 200.0 * i / 16000.0) + 0.2 * std::sin(2 * M_PI * 500.0 * i / 16000.0);
  }
  audio::QuantizedSequence q = audio::mulaw_encode(x);
  q.source = "u";
  SampleRnn<float> m(testing::micro_spec(32, 8, SpeakerMode::kOneHotTable), 8);
  std::mt19937_64 rng(2);
  const auto frames = testing::random_frames(m.spec().layout, 26, rng);
  const auto windows = audio::make_windows(q, frames, "a").windows;
  const auto e = testing::table_speaker(0, "a");
  nn::Adam<float> adam;
  for (int epoch = 0; epoch < 300; ++epoch) {
    auto st = m.initial_state();
    for (const auto& w : windows) {
      auto grads = m.params().zeros_like();
      m.forward_training(w, e, st, &grads);
      adam.step(m.params().named(), grads.named(), 3e-3);
    }
  }
  SamplingOptions argmax;
  argmax.mode = SamplingMode::kArgmax;
  const auto out = m.generate(frames, e, 0, argmax);
  int same = 0;
  for (std::size_t i = 0; i < q.codes.size(); ++i) same += (out.codes[i] == q.codes[i]);
  CHECK(static_cast<double>(same) / static_cast<double>(q.codes.size()) > 0.9);
}

TEST_CASE("non-finite loss reports parameter norms") {
  std::mt19937_64 rng(1);
  SampleRnn<float> m(encoder_spec(), 1);
  m.params().w_out(0, 0) = std::numeric_limits<float>::quiet_NaN();
  auto st = m.initial_state();
  try {
    m.forward_training(testing::random_window(m.spec(), rng), testing::vector_speaker(100, 1), st);
    FAIL("NaN accepted");
  } catch (const NumericalError& err) {
    CHECK(std::string(err.what()).find("w_out") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip and spec checks") {
  testing::TempDir dir("ckpt");
  std::mt19937_64 rng(3);
  SampleRnn<float> m(table_spec(), 5);
  save_checkpoint(dir / "m.ckpt", m, {{"epoch", "3"}});
  const auto info = read_checkpoint_info(dir / "m.ckpt");
  CHECK(info.spec == m.spec());
  CHECK(info.metadata.at("epoch") == "3");
  const auto back = load_checkpoint<float>(dir / "m.ckpt");
  auto pa = m.params().named();
  auto pb = const_cast<SampleRnn<float>&>(back).params().named();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].tensor == *pb[i].tensor);
  const auto w = testing::random_window(m.spec(), rng);
  auto s1 = m.initial_state();
  auto s2 = back.initial_state();
  CHECK(m.forward_training(w, testing::table_speaker(0, "a"), s1).mean_nll ==
        back.forward_training(w, testing::table_speaker(0, "a"), s2).mean_nll);

  auto other = table_spec(24);
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "m.ckpt", &other), DataError);
  const auto as_double = load_checkpoint<double>(dir / "m.ckpt");
  CHECK(as_double.params().w_out.cast<float>() == m.params().w_out);
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "none.ckpt"), DataError);
}

}  // TEST_SUITE
