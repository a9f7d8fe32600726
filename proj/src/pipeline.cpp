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

#include "samplernn/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "samplernn/container.hpp"
#include "samplernn/dsp.hpp"
#include "samplernn/embeddings.hpp"
#include "samplernn/encoder.hpp"
#include "samplernn/error.hpp"
#include "samplernn/evaluation.hpp"
#include "samplernn/plot.hpp"
#include "samplernn/synthetic.hpp"

namespace samplernn::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr int kOk = static_cast<int>(ExitCode::kOk);
constexpr int kUsage = static_cast<int>(ExitCode::kUsage);
constexpr int kData = static_cast<int>(ExitCode::kData);

std::uint64_t mix(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 1469598103934665603ull ^ (seed * 0x9e3779b97f4a7c15ull);
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Writes through a temporary file and keeps the old file when nothing changed.
// Returns true when the target was (re)written.
bool write_if_changed(const fs::path& path, const std::function<void(const fs::path&)>& writer) {
  const fs::path tmp = path.string() + ".new";
  writer(tmp);
  if (fs::exists(path) && read_text_file(path) == read_text_file(tmp)) {
    fs::remove(tmp);
    return false;
  }
  fs::rename(tmp, path);
  return true;
}

bool write_text_if_changed(const fs::path& path, const std::string& content) {
  if (fs::exists(path) && read_text_file(path) == content) return false;
  write_text_file(path, content);
  return true;
}

std::string join(const std::vector<std::string>& v, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + v[i];
  return out;
}

void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) {
    throw DataError(p.string() + " does not exist (run 'samplernn " + producer + "' first)");
  }
}

// ---------------------------------------------------------------------------
// Utterance caches

struct CachePaths {
  fs::path codes, frames, trimmed;
};

CachePaths cache_paths(const fs::path& cache_dir, const std::string& speaker,
                       const std::string& utt) {
  const auto base = cache_dir / speaker / utt;
  return {base.string() + ".q", base.string() + ".feat", base.string() + ".trim.wav"};
}

bool cache_fresh(const CachePaths& c, const std::vector<fs::path>& sources,
                 const conditioning::FeatureLayout& layout) {
  for (const auto& p : {c.codes, c.frames, c.trimmed}) {
    if (!fs::exists(p)) return false;
  }
  auto oldest = std::min({fs::last_write_time(c.codes), fs::last_write_time(c.frames),
                          fs::last_write_time(c.trimmed)});
  for (const auto& s : sources) {
    if (fs::exists(s) && fs::last_write_time(s) > oldest) return false;
  }
  const auto frames = conditioning::load_frames(c.frames);
  return !frames.empty() && static_cast<int>(frames.front().dim()) == layout.dim();
}

// Trims, aligns labels, extracts prosody and quantizes one recording.
double process_utterance(const fs::path& wav, const fs::path& lab, const std::string& speaker,
                         const conditioning::FeatureSchema& schema,
                         const conditioning::FeatureLayout& layout, const CachePaths& out) {
  const auto clip = audio::load_waveform(wav, speaker, wav.stem().string());
  const auto labels = conditioning::parse_label_file(lab, schema);
  const auto trimmed = audio::trim_silences(clip);
  if (trimmed.status == audio::TrimStatus::kAllSilence || trimmed.clip.samples.empty()) {
    throw DataError(wav.string() + ": recording is silent");
  }
  const auto aligned = conditioning::remap_annotations(labels, trimmed.removed, clip.sample_rate);
  const auto n = static_cast<std::int64_t>(trimmed.clip.samples.size());
  const auto frames_count = dsp::num_frames(n, audio::WindowConfig{}.frame_size);
  const auto durations =
      conditioning::append_duration_features(aligned, audio::WindowConfig{}.frame_size,
                                             clip.sample_rate, frames_count);
  const auto prosody = conditioning::extract_f0_uv(trimmed.clip);
  const auto frames = conditioning::upsample_to_frames(aligned, durations, &prosody, layout);
  fs::create_directories(out.codes.parent_path());
  audio::save_quantized(out.codes, audio::mulaw_encode(trimmed.clip.samples));
  conditioning::save_frames(out.frames, frames);
  audio::save_waveform(out.trimmed, trimmed.clip);
  return trimmed.clip.duration();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

KeyValueConfig default_config() {
  KeyValueConfig c;
  // Model and optimizer hyperparameters.
  c.set("speech_sampling_frequency", "16000");
  c.set("speech_quantization_bits", "8");
  c.set("speaker_embedding_size", "100");
  c.set("global_features_size", "50");
  c.set("categorical_linguistic_features_embedding_size", "15");
  c.set("top_frame_level_seq_length", "13");
  c.set("top_frame_level_input_size", "80");
  c.set("upsampling_ratios", "4,20");
  c.set("gru_hidden_size", "1024");
  c.set("batch_size", "128");
  c.set("initial_learning_rate", "0.0001");
  c.set("learning_rate_patience", "3");
  c.set("learning_scaling_factor", "0.5");
  c.set("epochs", "50");
  c.set("plateau_threshold", "0.0001");
  c.set("sample_level_order", "20");
  c.set("code_embedding_size", "256");
  c.set("max_train_windows", "0");
  c.set("max_validation_windows", "0");
  // Corpus protocol.
  c.set("seed", "1");
  c.set("schema", "standard");
  c.set("phone_vocab", "64");
  c.set("base_speakers_per_gender", "20");
  c.set("adaptation_speakers_per_gender", "5");
  c.set("validation_seconds", "45");
  c.set("test_seconds", "45");
  c.set("adaptation_test_seconds", "180");
  c.set("seed_pool_seconds", "120");
  c.set("duration_scale", "1");
  // Speaker encoder and embeddings.
  c.set("encoder", "conv");
  c.set("encoder_steps", "2000");
  c.set("encoder_chunk_seconds", "1");
  c.set("encoder_chunks_per_step", "4");
  c.set("encoder_learning_rate", "0.001");
  c.set("embedding_seed_seconds", "60");
  // Evaluation.
  c.set("seed_lengths", "1,10,60,120");
  c.set("sampling_temperature", "1");
  c.set("distortion_utterances", "0");
  c.set("distortion_max_seconds", "2");
  c.set("eval_max_utterances", "0");
  c.set("eval_max_seconds", "0");
  c.set("curve_max_utterances", "0");
  c.set("curve_max_seconds", "0");
  return c;
}

KeyValueConfig desk_scale_overrides() {
  KeyValueConfig c;
  c.set("gru_hidden_size", "64");
  c.set("code_embedding_size", "16");
  c.set("batch_size", "16");
  c.set("initial_learning_rate", "0.001");
  c.set("epochs", "5");
  c.set("base_speakers_per_gender", "1");
  c.set("adaptation_speakers_per_gender", "1");
  c.set("duration_scale", "0.2");
  c.set("encoder_steps", "1000");
  c.set("encoder_chunks_per_step", "2");
  c.set("distortion_utterances", "1");
  c.set("eval_max_utterances", "2");
  c.set("eval_max_seconds", "3");
  c.set("curve_max_utterances", "2");
  c.set("curve_max_seconds", "3");
  return c;
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k;
    const auto defaults = default_config();
    for (const auto& [key, value] : defaults.entries()) k.insert(key);
    k.insert("corpus_roots");
    k.insert("desk_scale");
    return k;
  }();
  return keys;
}

// ---------------------------------------------------------------------------
// Experiment

Experiment Experiment::open(const fs::path& manifest_or_dir) {
  Experiment e;
  const fs::path manifest =
      fs::is_directory(manifest_or_dir) ? manifest_or_dir / "experiment.cfg" : manifest_or_dir;
  require_file(manifest, "prepare");
  e.dir_ = fs::absolute(manifest).parent_path();
  e.cfg_ = default_config();
  e.cfg_.merge(KeyValueConfig::load(manifest));
  e.cfg_.check_known(known_config_keys());
  return e;
}

std::uint64_t Experiment::seed() const {
  return static_cast<std::uint64_t>(cfg_.get_int("seed", 1));
}

model::ModelConfig Experiment::model_config() const {
  if (cfg_.get_int("speech_sampling_frequency", 16000) != audio::kSampleRate) {
    throw UsageError("speech_sampling_frequency must be 16000");
  }
  return model::ModelConfig::from_config(cfg_);
}

training::TrainConfig Experiment::train_config() const {
  auto c = training::TrainConfig::from_config(cfg_);
  c.seed = seed();
  return c;
}

conditioning::FeatureSchema Experiment::schema() const {
  const std::string s = cfg_.get_string("schema", "standard");
  if (s == "standard") return conditioning::FeatureSchema::standard(cfg_.get_int("phone_vocab", 64));
  return conditioning::FeatureSchema::load(s);
}

conditioning::FeatureLayout Experiment::layout() const {
  return conditioning::FeatureLayout::from_schema(schema(), true);
}

const datasets::SplitPlan& Experiment::plan() const {
  if (!plan_) {
    require_file(split_path(), "prepare");
    plan_ = datasets::SplitPlan::load(split_path());
  }
  return *plan_;
}

const conditioning::SpeakerStats& Experiment::stats() const {
  if (!stats_) {
    require_file(stats_path(), "prepare");
    stats_ = conditioning::SpeakerStats::load(stats_path());
  }
  return *stats_;
}

training::UtteranceData Experiment::utterance(const std::string& speaker, const std::string& id,
                                              bool f0uv) const {
  const auto paths = cache_paths(cache_dir(), speaker, id);
  require_file(paths.codes, "prepare");
  training::UtteranceData u;
  u.speaker = speaker;
  u.utterance = id;
  u.codes = audio::load_quantized(paths.codes);
  auto frames = conditioning::zscore_normalize(conditioning::load_frames(paths.frames), stats(), speaker);
  u.frames = f0uv ? std::move(frames) : conditioning::drop_f0uv(frames, layout());
  return u;
}

audio::WaveformClip Experiment::trimmed_clip(const std::string& speaker,
                                             const std::string& id) const {
  const auto paths = cache_paths(cache_dir(), speaker, id);
  require_file(paths.trimmed, "prepare");
  return audio::load_waveform(paths.trimmed, speaker, id);
}

std::vector<training::UtteranceData> Experiment::split_data(datasets::Split split, bool f0uv,
                                                            bool base_only) const {
  const auto& p = plan();
  std::vector<training::UtteranceData> out;
  for (const auto& a : p.select(split)) {
    if (base_only && !std::binary_search(p.base_speakers.begin(), p.base_speakers.end(), a.speaker)) {
      continue;
    }
    out.push_back(utterance(a.speaker, a.utterance, f0uv));
  }
  return out;
}

std::string Experiment::speaker_of(const std::string& utterance) const {
  for (const auto& a : plan().assignments) {
    if (a.utterance == utterance) return a.speaker;
  }
  throw DataError("utterance '" + utterance + "' is not in the split manifest");
}

namespace {

// ---------------------------------------------------------------------------
// Shared command helpers

std::unique_ptr<embeddings::SpeechEncoder> experiment_encoder(const Experiment& exp) {
  const std::string spec = exp.config().get_string("encoder", "conv");
  if (spec == "conv") {
    require_file(exp.encoder_path(), "train-encoder");
    return std::make_unique<embeddings::ConvEncoder>(embeddings::ConvEncoder::load(exp.encoder_path()));
  }
  return embeddings::open_encoder(spec);
}

std::vector<audio::WaveformClip> pool_clips(const Experiment& exp, const std::string& speaker) {
  const auto& plan = exp.plan();
  const bool base =
      std::binary_search(plan.base_speakers.begin(), plan.base_speakers.end(), speaker);
  std::vector<audio::WaveformClip> clips;
  for (const auto& a : plan.select(speaker, base ? datasets::Split::kTrain : datasets::Split::kSeedPool)) {
    clips.push_back(exp.trimmed_clip(speaker, a.utterance));
  }
  if (clips.empty()) throw DataError("speaker '" + speaker + "' has no seed material in the manifest");
  return clips;
}

model::SampleRnn<float> load_run_model(const Experiment& exp, const training::Variant& v,
                                       const std::string& checkpoint) {
  const fs::path path = checkpoint.empty() ? exp.run_dir(v) / "best.ckpt" : fs::path(checkpoint);
  require_file(path, "train --variant " + v.name());
  return model::load_checkpoint<float>(path);
}

// The embedding a trained model uses for one of its own training speakers.
SpeakerEmbedding own_embedding(const Experiment& exp, const model::SampleRnn<float>& m,
                               const std::string& speaker) {
  if (m.spec().speaker_mode == model::SpeakerMode::kOneHotTable) {
    const auto& sp = m.spec().speakers;
    const auto it = std::find(sp.begin(), sp.end(), speaker);
    if (it == sp.end()) {
      throw DataError("speaker '" + speaker +
                      "' was not seen in training; one-hot models cannot synthesize it");
    }
    return m.table_embedding(static_cast<int>(it - sp.begin()));
  }
  const auto path = exp.embeddings_dir() / (speaker + ".emb");
  if (!fs::exists(path)) {
    throw DataError(path.string() + " does not exist (run 'samplernn extract-embeddings --speaker " +
                    speaker + "' or pass --embedding)");
  }
  return embeddings::load_embedding(path);
}

model::SamplingOptions sampling_options(const Experiment& exp, bool argmax, double temperature) {
  model::SamplingOptions s;
  s.mode = argmax ? model::SamplingMode::kArgmax : model::SamplingMode::kCategorical;
  s.temperature = temperature > 0.0 ? temperature : exp.config().get_double("sampling_temperature", 1.0);
  return s;
}

struct Synthesis {
  audio::WaveformClip clip;
  evaluation::UtteranceScore score;
};

Synthesis synthesize_and_score(const model::SampleRnn<float>& m, const training::UtteranceData& u,
                               const SpeakerEmbedding& embedding,
                               const audio::WaveformClip& reference, double max_seconds,
                               std::uint64_t seed, const model::SamplingOptions& sampling) {
  const int F = m.config().frame_size;
  std::span<const ConditioningFrame> frames(u.frames);
  audio::WaveformClip ref = reference;
  if (max_seconds > 0.0) {
    const auto limit = static_cast<std::size_t>(std::ceil(max_seconds * audio::kSampleRate / F));
    if (frames.size() > limit) frames = frames.first(limit);
    ref.samples.resize(std::min(ref.samples.size(), frames.size() * F));
  }
  const auto codes = m.generate(frames, embedding, seed, sampling);
  Synthesis s;
  s.clip = evaluation::codes_to_clip(codes, embedding.speaker_id, u.utterance);
  s.score = evaluation::score_utterance(ref, s.clip);
  s.score.speaker = u.speaker;
  s.score.utterance = u.utterance;
  return s;
}

// ---------------------------------------------------------------------------
// Commands

struct PrepareArgs {
  std::vector<std::string> corpus;
  std::string out;
  std::string config;
  std::string schema;
  long seed = -1;
  bool desk = false;
};

int cmd_prepare(const PrepareArgs& a) {
  KeyValueConfig cfg = default_config();
  if (a.desk) {
    cfg.merge(desk_scale_overrides());
    cfg.set("desk_scale", "true");
  }
  if (!a.config.empty()) cfg.merge(KeyValueConfig::load(a.config));
  if (a.seed >= 0) cfg.set("seed", std::to_string(a.seed));
  if (!a.schema.empty()) cfg.set("schema", fs::absolute(a.schema).string());
  std::vector<std::string> roots;
  for (const auto& r : a.corpus) roots.push_back(fs::absolute(r).lexically_normal().string());
  cfg.set("corpus_roots", join(roots));
  cfg.check_known(known_config_keys());
  if (roots.empty()) throw UsageError("prepare needs at least one --corpus directory");

  const fs::path dir = fs::absolute(a.out);
  fs::create_directories(dir);
  write_text_if_changed(dir / "experiment.cfg", cfg.format());
  const auto exp = Experiment::open(dir);
  const auto schema = exp.schema();
  const auto layout = exp.layout();
  exp.model_config();  // validates

  std::vector<fs::path> schema_sources;
  if (cfg.get_string("schema", "standard") != "standard") schema_sources.push_back(cfg.get_string("schema", ""));
  int processed = 0, reused = 0;
  const datasets::DurationProbe probe = [&](const fs::path& wav) {
    const std::string speaker = wav.parent_path().filename().string();
    const std::string utt = wav.stem().string();
    auto lab = wav;
    lab.replace_extension(".lab");
    const auto paths = cache_paths(exp.cache_dir(), speaker, utt);
    auto sources = schema_sources;
    sources.push_back(wav);
    sources.push_back(lab);
    if (cache_fresh(paths, sources, layout)) {
      ++reused;
      return static_cast<double>(audio::load_quantized(paths.codes).codes.size()) / audio::kSampleRate;
    }
    ++processed;
    return process_utterance(wav, lab, speaker, schema, layout, paths);
  };
  std::vector<fs::path> root_paths(roots.begin(), roots.end());
  const auto catalog = datasets::build_catalog(root_paths, probe);

  std::vector<double> lengths = cfg.get_double_list("seed_lengths", {1, 10, 60, 120});
  datasets::SplitTargets targets;
  targets.validation_seconds = cfg.get_double("validation_seconds", 45);
  targets.test_seconds = cfg.get_double("test_seconds", 45);
  targets.adapt_test_seconds = cfg.get_double("adaptation_test_seconds", 180);
  targets.seed_pool_seconds = cfg.get_double("seed_pool_seconds", 120);
  targets = targets.scaled(cfg.get_double("duration_scale", 1.0));
  // The pool must always hold the longest seed.
  for (double t : lengths) targets.seed_pool_seconds = std::max(targets.seed_pool_seconds, t);
  const auto plan = datasets::make_split_plan(
      catalog, cfg.get_int("base_speakers_per_gender", 20),
      cfg.get_int("adaptation_speakers_per_gender", 5), exp.seed(), targets);
  const bool plan_written = write_if_changed(exp.split_path(), [&](const fs::path& p) { plan.save(p); });

  conditioning::SpeakerStatsBuilder builder(layout);
  for (const auto& as : plan.assignments) {
    if (as.split != datasets::Split::kTrain && as.split != datasets::Split::kSeedPool) continue;
    const auto paths = cache_paths(exp.cache_dir(), as.speaker, as.utterance);
    builder.add(as.speaker, as.utterance, conditioning::load_frames(paths.frames));
  }
  const auto stats = builder.build();
  const bool stats_written = write_if_changed(exp.stats_path(), [&](const fs::path& p) { stats.save(p); });

  std::ostringstream report;
  report << "speakers\t" << catalog.speakers.size() << '\n';
  report << "utterances\t" << plan.assignments.size() << '\n';
  report << "total_seconds\t" << format_double(catalog.total_duration()) << '\n';
  report << "base_speakers\t" << join(plan.base_speakers) << '\n';
  report << "adaptation_speakers\t" << join(plan.adaptation_speakers) << '\n';
  report << "seed\t" << plan.seed << '\n';
  for (const auto& s : catalog.skipped) report << "excluded\t" << s << '\n';
  write_text_if_changed(dir / "prepare_report.txt", report.str());
  spdlog::info("prepare: {} speakers, {} utterances ({} processed, {} cached), {} excluded; "
               "split {}, stats {}",
               catalog.speakers.size(), plan.assignments.size(), processed, reused,
               catalog.skipped.size(), plan_written ? "written" : "unchanged",
               stats_written ? "written" : "unchanged");
  return kOk;
}

int cmd_train_encoder(const Experiment& exp, int steps) {
  const auto& cfg = exp.config();
  if (cfg.get_string("encoder", "conv") != "conv") {
    throw UsageError("experiment uses encoder '" + cfg.get_string("encoder", "") +
                     "'; train-encoder only trains the convolutional encoder");
  }
  std::vector<audio::WaveformClip> clips;
  for (const auto& a : exp.plan().select(datasets::Split::kTrain)) {
    clips.push_back(exp.trimmed_clip(a.speaker, a.utterance));
  }
  embeddings::EncoderTrainConfig tc;
  tc.steps = steps > 0 ? steps : cfg.get_int("encoder_steps", 2000);
  tc.chunk_samples =
      static_cast<int>(cfg.get_double("encoder_chunk_seconds", 1.0) * audio::kSampleRate);
  tc.chunks_per_step = cfg.get_int("encoder_chunks_per_step", 4);
  tc.learning_rate = cfg.get_double("encoder_learning_rate", 1e-3);
  tc.seed = exp.seed();
  embeddings::ConvEncoder encoder(embeddings::default_conv_layers(), exp.seed());
  const auto report = embeddings::train_encoder(encoder, clips, tc);
  encoder.save(exp.encoder_path());
  std::ostringstream csv;
  csv << "worker,initial_loss,final_loss\n";
  for (std::size_t i = 0; i < report.workers.size(); ++i) {
    csv << embeddings::to_string(report.workers[i]) << ',' << format_double(report.initial_loss[i])
        << ',' << format_double(report.final_loss[i]) << '\n';
  }
  write_text_file(exp.dir() / "encoder_report.csv", csv.str());
  return kOk;
}

int cmd_extract_embeddings(const Experiment& exp, std::vector<std::string> speakers,
                           double seconds, const std::string& out_dir) {
  const auto encoder = experiment_encoder(exp);
  const embeddings::CachedEncoder cached(*encoder);
  if (speakers.empty()) speakers = exp.plan().base_speakers;
  if (seconds <= 0.0) seconds = exp.config().get_double("embedding_seed_seconds", 60);
  const fs::path dir = out_dir.empty() ? exp.embeddings_dir() : fs::path(out_dir);
  std::vector<SpeakerEmbedding> all;
  for (const auto& s : speakers) {
    const auto pool = pool_clips(exp, s);
    const auto seed = embeddings::sample_seed(pool, seconds, mix(exp.seed(), s));
    all.push_back(embeddings::embed_seed(seed, cached));
    spdlog::info("embedding for {} from {:.1f} s of seed speech", s, seed.seconds());
  }
  embeddings::save_embeddings(dir, all);
  return kOk;
}

int cmd_train(const Experiment& exp, const std::vector<training::Variant>& variants, int epochs) {
  auto tc = exp.train_config();
  if (epochs >= 0) tc.epochs = epochs;
  const auto mc = exp.model_config();
  const auto layout = exp.layout();
  const auto& speakers = exp.plan().base_speakers;
  const auto train_data = exp.split_data(datasets::Split::kTrain, true);
  const auto val_data = exp.split_data(datasets::Split::kValidation, true);
  std::map<std::string, SpeakerEmbedding> cached;
  const bool need_encoder = std::any_of(variants.begin(), variants.end(), [](const auto& v) {
    return v.speaker == model::SpeakerMode::kEncoder;
  });
  if (need_encoder) {
    if (!fs::is_directory(exp.embeddings_dir())) {
      throw DataError(exp.embeddings_dir().string() +
                      " does not exist (run 'samplernn extract-embeddings' first)");
    }
    cached = embeddings::load_embeddings(exp.embeddings_dir());
  }
  const int distortion_utts = exp.config().get_int("distortion_utterances", 0);
  const double distortion_seconds = exp.config().get_double("distortion_max_seconds", 2.0);

  for (const auto& v : variants) {
    const auto spec = training::variant_spec(v, mc, layout, speakers);
    const auto embs = training::variant_embeddings(v, speakers, cached);
    const auto train_set = v.f0uv ? train_data : training::without_f0uv(train_data, layout);
    const auto val_set = v.f0uv ? val_data : training::without_f0uv(val_data, layout);
    model::SampleRnn<float> m(spec, exp.seed());
    const auto dir = exp.run_dir(v);
    std::vector<plot::EpochDistortion> distortion;
    training::TrainHooks hooks;
    if (distortion_utts > 0) {
      hooks.on_epoch = [&](int epoch, const model::SampleRnn<float>& model) {
        double mcd = 0.0, rmse = 0.0;
        int n = 0, voiced = 0;
        for (int i = 0; i < distortion_utts && i < static_cast<int>(val_set.size()); ++i) {
          const auto& u = val_set[i];
          const auto s = synthesize_and_score(model, u, embs.at(u.speaker),
                                              exp.trimmed_clip(u.speaker, u.utterance),
                                              distortion_seconds, mix(exp.seed(), u.utterance), {});
          mcd += s.score.mcd_db;
          ++n;
          if (!std::isnan(s.score.rmse_f0_hz)) {
            rmse += s.score.rmse_f0_hz;
            ++voiced;
          }
        }
        distortion.push_back({epoch, n ? mcd / n : std::nan(""),
                              voiced ? rmse / voiced : std::nan("")});
        fs::create_directories(dir);
        write_text_file(dir / "distortion.csv", plot::epoch_distortion_csv(distortion));
      };
    }
    spdlog::info("training {} ({} train / {} validation utterances)", v.name(), train_set.size(),
                 val_set.size());
    training::train(m, train_set, val_set, embs, tc, dir, hooks);
  }
  return kOk;
}

struct SynthArgs {
  std::string variant = "encoder-f0uv";
  std::string checkpoint;
  std::string utterance;
  std::string labels;
  std::string reference;
  std::string stats_speaker;
  std::string embedding;
  std::string out;
  long seed = -1;
  bool argmax = false;
  double temperature = 0.0;
  double max_seconds = 0.0;
};

int cmd_synthesize(const Experiment& exp, const SynthArgs& a) {
  const auto variant = training::Variant::parse(a.variant);
  const auto m = load_run_model(exp, variant, a.checkpoint);
  const bool f0uv = m.spec().layout.f0uv;
  training::UtteranceData u;
  std::optional<audio::WaveformClip> reference;
  if (!a.utterance.empty()) {
    const std::string speaker = exp.speaker_of(a.utterance);
    u = exp.utterance(speaker, a.utterance, f0uv);
    reference = exp.trimmed_clip(speaker, a.utterance);
  } else if (!a.labels.empty()) {
    if (a.stats_speaker.empty()) {
      throw UsageError("--labels needs --stats-speaker to normalize the features");
    }
    const auto schema = exp.schema();
    const auto layout = exp.layout();
    auto labels = conditioning::parse_label_file(a.labels, schema);
    std::vector<ConditioningFrame> frames;
    if (!a.reference.empty()) {
      const auto clip = audio::load_waveform(a.reference, a.stats_speaker, fs::path(a.labels).stem().string());
      const auto trimmed = audio::trim_silences(clip);
      labels = conditioning::remap_annotations(labels, trimmed.removed, clip.sample_rate);
      const auto n = static_cast<std::int64_t>(trimmed.clip.samples.size());
      const auto durations = conditioning::append_duration_features(
          labels, m.config().frame_size, audio::kSampleRate, dsp::num_frames(n, m.config().frame_size));
      const auto prosody = conditioning::extract_f0_uv(trimmed.clip);
      frames = conditioning::upsample_to_frames(labels, durations, &prosody, layout);
      reference = trimmed.clip;
    } else {
      if (f0uv) throw UsageError("this model needs logF0/UV; pass --reference to extract them");
      auto no_prosody = layout;
      no_prosody.f0uv = false;
      const auto durations =
          conditioning::append_duration_features(labels, m.config().frame_size, audio::kSampleRate);
      frames = conditioning::upsample_to_frames(labels, durations, nullptr, no_prosody);
    }
    frames = conditioning::zscore_normalize(frames, exp.stats(), a.stats_speaker);
    if (!f0uv && !a.reference.empty()) frames = conditioning::drop_f0uv(frames, layout);
    u.speaker = a.stats_speaker;
    u.utterance = fs::path(a.labels).stem().string();
    u.frames = std::move(frames);
  } else {
    throw UsageError("synthesize needs --utterance or --labels");
  }

  const SpeakerEmbedding embedding =
      a.embedding.empty() ? own_embedding(exp, m, u.speaker) : embeddings::load_embedding(a.embedding);
  const auto sampling = sampling_options(exp, a.argmax, a.temperature);
  const std::uint64_t seed = a.seed >= 0 ? static_cast<std::uint64_t>(a.seed) : mix(exp.seed(), u.utterance);
  std::span<const ConditioningFrame> frames(u.frames);
  if (a.max_seconds > 0.0) {
    const auto limit = static_cast<std::size_t>(std::ceil(a.max_seconds * audio::kSampleRate / m.config().frame_size));
    if (frames.size() > limit) frames = frames.first(limit);
  }
  const auto codes = m.generate(frames, embedding, seed, sampling);
  auto clip = evaluation::codes_to_clip(codes, embedding.speaker_id, u.utterance);
  const fs::path out = a.out.empty()
                           ? exp.dir() / "synth" / variant.name() / (u.utterance + "_" + embedding.speaker_id + ".wav")
                           : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  audio::save_waveform(out, clip);
  spdlog::info("wrote {} ({:.2f} s, speaker embedding {})", out.string(), clip.duration(),
               embedding.speaker_id);
  if (reference) {
    auto ref = *reference;
    ref.samples.resize(std::min(ref.samples.size(), clip.samples.size()));
    const auto score = evaluation::score_utterance(ref, clip);
    std::cout << "mcd_db=" << format_double(score.mcd_db)
              << " rmse_f0_hz=" << format_double(score.rmse_f0_hz) << '\n';
  }
  return kOk;
}

int cmd_evaluate(const Experiment& exp, const std::string& variant_name, const std::string& split_name,
                 int max_utts, double max_seconds) {
  const auto variant = training::Variant::parse(variant_name);
  const auto m = load_run_model(exp, variant, "");
  const auto split = datasets::split_from_string(split_name);
  const auto data = exp.split_data(split, variant.f0uv);
  if (data.empty()) throw DataError("split '" + split_name + "' is empty");
  if (max_utts < 0) max_utts = exp.config().get_int("eval_max_utterances", 0);
  if (max_seconds < 0) max_seconds = exp.config().get_double("eval_max_seconds", 0);

  std::map<std::string, SpeakerEmbedding> embs;
  for (const auto& s : exp.plan().base_speakers) embs[s] = own_embedding(exp, m, s);
  const double nll = training::evaluate_nll(m, data, embs);
  evaluation::DistortionReport report;
  std::map<std::string, int> per_speaker;
  for (const auto& u : data) {
    if (max_utts > 0 && per_speaker[u.speaker] >= max_utts) continue;
    ++per_speaker[u.speaker];
    const auto s = synthesize_and_score(m, u, embs.at(u.speaker), exp.trimmed_clip(u.speaker, u.utterance),
                                        max_seconds, mix(exp.seed(), u.utterance),
                                        sampling_options(exp, false, 0.0));
    report.utterances.push_back(s.score);
  }
  report.aggregate();
  const auto dir = exp.run_dir(variant);
  write_text_file(dir / ("eval_" + split_name + "_utterances.csv"), report.utterances_csv());
  write_text_file(dir / ("eval_" + split_name + "_speakers.csv"), report.speakers_csv());
  write_text_file(dir / ("eval_" + split_name + "_nll.csv"),
                  "variant,split,nll\n" + variant.name() + "," + split_name + "," + format_double(nll) + "\n");
  std::cout << "nll=" << format_double(nll);
  if (!report.curve.empty()) {
    std::cout << " mcd_db=" << format_double(report.curve.front().mcd_db)
              << " rmse_f0_hz=" << format_double(report.curve.front().rmse_f0_hz);
  }
  std::cout << '\n';
  return kOk;
}

int cmd_adapt_curve(const Experiment& exp, const std::string& variant_name,
                    std::vector<double> lengths, int max_utts, double max_seconds) {
  const auto variant = training::Variant::parse(variant_name);
  if (variant.speaker != model::SpeakerMode::kEncoder) {
    throw UsageError("adapt-curve needs an encoder variant (one-hot models cannot represent unseen speakers)");
  }
  const auto m = load_run_model(exp, variant, "");
  const auto encoder = experiment_encoder(exp);
  if (lengths.empty()) lengths = exp.config().get_double_list("seed_lengths", evaluation::default_seed_seconds());
  if (max_utts < 0) max_utts = exp.config().get_int("curve_max_utterances", 0);
  if (max_seconds < 0) max_seconds = exp.config().get_double("curve_max_seconds", 0);
  std::vector<evaluation::AdaptationSpeaker> speakers;
  for (const auto& s : exp.plan().adaptation_speakers) {
    evaluation::AdaptationSpeaker a;
    a.id = s;
    a.seed_pool = pool_clips(exp, s);
    for (const auto& as : exp.plan().select(s, datasets::Split::kAdaptTest)) {
      evaluation::TestUtterance t;
      t.id = as.utterance;
      t.frames = exp.utterance(s, as.utterance, variant.f0uv).frames;
      t.reference = exp.trimmed_clip(s, as.utterance);
      a.tests.push_back(std::move(t));
    }
    speakers.push_back(std::move(a));
  }
  evaluation::CurveOptions opts;
  opts.seed_seconds = lengths;
  opts.seed = exp.seed();
  opts.sampling = sampling_options(exp, false, 0.0);
  opts.max_test_utterances = max_utts;
  opts.max_frames = max_seconds > 0.0
                        ? static_cast<int>(std::ceil(max_seconds * audio::kSampleRate / m.config().frame_size))
                        : 0;
  const auto report = evaluation::adaptation_curve(m, *encoder, speakers, opts);
  const auto dir = exp.run_dir(variant);
  write_text_file(dir / "adaptation_utterances.csv", report.utterances_csv());
  write_text_file(dir / "adaptation_speakers.csv", report.speakers_csv());
  write_text_file(dir / "adaptation_curve.csv", report.curve_csv());
  for (const auto& p : report.curve) {
    std::cout << "T=" << format_double(p.seed_seconds) << " mcd_db=" << format_double(p.mcd_db)
              << " rmse_f0_hz=" << format_double(p.rmse_f0_hz) << '\n';
  }
  return kOk;
}

int cmd_plot(const std::vector<std::string>& inputs, std::vector<std::string> labels,
             const std::string& out) {
  if (inputs.empty()) throw UsageError("plot needs at least one --input CSV");
  std::vector<std::pair<std::string, training::RunLog>> runs;
  std::vector<std::pair<std::string, std::vector<evaluation::CurvePoint>>> curves;
  std::vector<std::pair<std::string, std::vector<plot::EpochDistortion>>> distortion;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const fs::path p = inputs[i];
    require_file(p, "train / adapt-curve");
    const std::string text = read_text_file(p);
    const std::string label = i < labels.size() ? labels[i] : p.parent_path().filename().string();
    const std::string header = text.substr(0, text.find('\n'));
    if (header == "epoch,train_nll,val_nll,lr") {
      runs.emplace_back(label, training::RunLog::from_csv(text));
    } else if (header.rfind("T,mcd_db", 0) == 0) {
      curves.emplace_back(label, evaluation::parse_curve_csv(text));
    } else if (header == "epoch,mcd_db,rmse_f0_hz") {
      distortion.emplace_back(label, plot::parse_epoch_distortion_csv(text));
    } else {
      throw DataError(p.string() + ": unrecognized CSV header '" + header + "'");
    }
  }
  if ((!runs.empty()) + (!curves.empty()) + (!distortion.empty()) != 1) {
    throw UsageError("plot inputs must all be the same kind of CSV");
  }
  const std::string svg = !runs.empty()     ? plot::loss_curves_svg(runs)
                          : !curves.empty() ? plot::adaptation_svg(curves)
                                            : plot::epoch_distortion_svg(distortion);
  const fs::path o = out;
  if (o.has_parent_path()) fs::create_directories(o.parent_path());
  write_text_file(o, svg);
  spdlog::info("wrote {}", o.string());
  return kOk;
}

struct CorpusArgs {
  std::string out;
  int base_per_gender = 1;
  double base_seconds = 330;
  int adapt_per_gender = 1;
  double adapt_seconds = 200;
  double utterance_seconds = 4;
  long seed = 1;
  std::string prefix = "syn";
};

int cmd_make_corpus(const CorpusArgs& a) {
  auto spec = synthetic::desk_corpus_spec(a.base_per_gender, a.base_seconds, a.adapt_per_gender,
                                          a.adapt_seconds, static_cast<std::uint64_t>(a.seed), a.prefix);
  spec.utterance_seconds = a.utterance_seconds;
  synthetic::write_corpus(a.out, spec);
  spdlog::info("wrote synthetic corpus with {} speakers to {}", spec.speakers.size(), a.out);
  return kOk;
}

int cmd_desk(const std::string& out, long seed) {
  const fs::path root = fs::absolute(out);
  auto run = [](std::vector<std::string> args) {
    const int code = run_cli(args);
    if (code != kOk) throw Error(static_cast<ExitCode>(code), "step '" + args.front() + "' failed");
  };
  const std::string s = std::to_string(seed);
  const std::string exp = (root / "experiment").string();
  run({"make-corpus", "--out", (root / "corpus").string(), "--seed", s});
  run({"prepare", "--corpus", (root / "corpus").string(), "--out", exp, "--desk-scale", "--seed", s});
  run({"train-encoder", "--manifest", exp});
  run({"extract-embeddings", "--manifest", exp});
  run({"train", "--manifest", exp, "--variant", "encoder-f0uv"});
  run({"evaluate", "--manifest", exp, "--variant", "encoder-f0uv"});
  run({"adapt-curve", "--manifest", exp, "--variant", "encoder-f0uv"});
  const auto e = Experiment::open(exp);
  const std::string unseen = e.plan().adaptation_speakers.front();
  const std::string utt = e.plan().select(unseen, datasets::Split::kAdaptTest).front().utterance;
  run({"extract-embeddings", "--manifest", exp, "--speaker", unseen, "--T", "10", "--out-dir",
       (root / "unseen").string()});
  run({"synthesize", "--manifest", exp, "--variant", "encoder-f0uv", "--utterance", utt,
       "--embedding", (root / "unseen" / (unseen + ".emb")).string(), "--max-seconds", "3"});
  const auto run_dir = e.run_dir(training::Variant::parse("encoder-f0uv"));
  run({"plot", "--input", (run_dir / "runlog.csv").string(), "--out", (run_dir / "loss.svg").string()});
  run({"plot", "--input", (run_dir / "adaptation_curve.csv").string(), "--out",
       (run_dir / "adaptation.svg").string()});
  return kOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"SampleRNN text-to-speech with speaker embeddings", "samplernn"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string manifest = ".";
  auto add_manifest = [&](CLI::App* sub) {
    sub->add_option("--manifest,-m", manifest, "experiment directory or experiment.cfg")
        ->capture_default_str();
  };
  std::string variant = "encoder-f0uv";
  auto add_variant = [&](CLI::App* sub) {
    sub->add_option("--variant", variant, "onehot|encoder with or without -f0uv")
        ->capture_default_str();
  };

  CorpusArgs corpus;
  auto* make_corpus = app.add_subcommand("make-corpus", "write a synthetic multi-speaker corpus");
  make_corpus->add_option("--out", corpus.out, "corpus directory")->required();
  make_corpus->add_option("--base-per-gender", corpus.base_per_gender)->capture_default_str();
  make_corpus->add_option("--base-seconds", corpus.base_seconds)->capture_default_str();
  make_corpus->add_option("--adapt-per-gender", corpus.adapt_per_gender)->capture_default_str();
  make_corpus->add_option("--adapt-seconds", corpus.adapt_seconds)->capture_default_str();
  make_corpus->add_option("--utterance-seconds", corpus.utterance_seconds)->capture_default_str();
  make_corpus->add_option("--seed", corpus.seed)->capture_default_str();
  make_corpus->add_option("--prefix", corpus.prefix)->capture_default_str();

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "index corpora, split speakers, cache features");
  prepare->add_option("--corpus", prep.corpus, "corpus root (repeatable)")->required();
  prepare->add_option("--out", prep.out, "experiment directory")->required();
  prepare->add_option("--config", prep.config, "key = value overrides");
  prepare->add_option("--schema", prep.schema, "label schema file");
  prepare->add_option("--seed", prep.seed);
  prepare->add_flag("--desk-scale", prep.desk, "small model and corpus for a single CPU");

  int encoder_steps = 0;
  auto* train_encoder = app.add_subcommand("train-encoder", "self-supervised speech encoder");
  add_manifest(train_encoder);
  train_encoder->add_option("--steps", encoder_steps);

  std::vector<std::string> emb_speakers;
  double emb_seconds = 0.0;
  std::string emb_out;
  auto* extract = app.add_subcommand("extract-embeddings", "speaker embeddings from seed speech");
  add_manifest(extract);
  extract->add_option("--speaker", emb_speakers, "speaker id (repeatable; default base speakers)");
  extract->add_option("--T", emb_seconds, "seed seconds");
  extract->add_option("--out-dir", emb_out);

  bool grid = false;
  int epochs = -1;
  auto* train = app.add_subcommand("train", "train one variant or the 2x2 grid");
  add_manifest(train);
  add_variant(train);
  train->add_flag("--grid", grid, "train all four variants");
  train->add_option("--epochs", epochs);

  SynthArgs synth;
  auto* synthesize = app.add_subcommand("synthesize", "generate a waveform");
  add_manifest(synthesize);
  synthesize->add_option("--variant", synth.variant)->capture_default_str();
  synthesize->add_option("--checkpoint", synth.checkpoint);
  synthesize->add_option("--utterance", synth.utterance, "cached utterance id");
  synthesize->add_option("--labels", synth.labels, "label file");
  synthesize->add_option("--reference", synth.reference, "waveform for logF0/UV and scoring");
  synthesize->add_option("--stats-speaker", synth.stats_speaker);
  synthesize->add_option("--embedding", synth.embedding, ".emb file");
  synthesize->add_option("--seed", synth.seed);
  synthesize->add_flag("--argmax", synth.argmax);
  synthesize->add_option("--temperature", synth.temperature);
  synthesize->add_option("--max-seconds", synth.max_seconds);
  synthesize->add_option("--out", synth.out);

  std::string split = "test";
  int max_utts = -1;
  double max_seconds = -1.0;
  auto* evaluate = app.add_subcommand("evaluate", "NLL, MCD and RMSE-F0 on a split");
  add_manifest(evaluate);
  add_variant(evaluate);
  evaluate->add_option("--split", split)->capture_default_str();
  evaluate->add_option("--max-utterances", max_utts, "per speaker");
  evaluate->add_option("--max-seconds", max_seconds);

  std::vector<double> lengths;
  auto* curve = app.add_subcommand("adapt-curve", "distortion against seed length for unseen speakers");
  add_manifest(curve);
  add_variant(curve);
  curve->add_option("--T", lengths, "seed seconds (repeatable)");
  curve->add_option("--max-utterances", max_utts, "per speaker");
  curve->add_option("--max-seconds", max_seconds);

  std::vector<std::string> plot_inputs, plot_labels;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "SVG figures from run CSVs");
  plot->add_option("--input", plot_inputs)->required();
  plot->add_option("--label", plot_labels);
  plot->add_option("--out", plot_out)->required();

  std::string desk_out;
  long desk_seed = 1;
  auto* desk = app.add_subcommand("desk", "whole pipeline on a synthetic corpus");
  desk->add_option("--out", desk_out)->required();
  desk->add_option("--seed", desk_seed)->capture_default_str();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*make_corpus) return cmd_make_corpus(corpus);
    if (*prepare) return cmd_prepare(prep);
    if (*plot) return cmd_plot(plot_inputs, plot_labels, plot_out);
    if (*desk) return cmd_desk(desk_out, desk_seed);
    const auto exp = Experiment::open(manifest);
    if (*train_encoder) return cmd_train_encoder(exp, encoder_steps);
    if (*extract) return cmd_extract_embeddings(exp, emb_speakers, emb_seconds, emb_out);
    if (*train) {
      const auto variants = grid ? training::Variant::grid()
                                 : std::vector<training::Variant>{training::Variant::parse(variant)};
      return cmd_train(exp, variants, epochs);
    }
    if (*synthesize) return cmd_synthesize(exp, synth);
    if (*evaluate) return cmd_evaluate(exp, variant, split, max_utts, max_seconds);
    if (*curve) return cmd_adapt_curve(exp, variant, lengths, max_utts, max_seconds);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kData;
  }
  return kUsage;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace samplernn::pipeline
