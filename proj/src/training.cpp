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

#include "samplernn/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <limits>
#include <random>
#include <sstream>

#include "samplernn/conditioning.hpp"
#include "samplernn/container.hpp"
#include "samplernn/error.hpp"

namespace samplernn::training {

namespace {

const SpeakerEmbedding& embedding_for(const std::map<std::string, SpeakerEmbedding>& embeddings,
                                      const std::string& speaker) {
  const auto it = embeddings.find(speaker);
  if (it == embeddings.end()) {
    throw DataError("no speaker embedding for '" + speaker +
                    "' (run 'samplernn extract-embeddings' first)");
  }
  return it->second;
}

audio::WindowConfig window_config(const model::ModelConfig& c) {
  audio::WindowConfig w;
  w.frame_size = c.frame_size;
  w.seq_len = c.seq_len;
  w.strict = true;
  return w;
}

std::string csv_number(double v) { return std::isnan(v) ? "nan" : format_double(v); }

}  // namespace

// ---------------------------------------------------------------------------
// Variants and configuration

std::string Variant::name() const {
  return model::to_string(speaker) + (f0uv ? "-f0uv" : "-nof0uv");
}

Variant Variant::parse(const std::string& s) {
  std::string lower;
  for (char c : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  const auto sep = lower.find_first_of("-_x+,/");
  if (sep == std::string::npos) {
    throw UsageError("variant '" + s + "' must look like {onehot,encoder}-{f0uv,nof0uv}");
  }
  Variant v;
  v.speaker = model::speaker_mode_from_string(lower.substr(0, sep));
  const std::string prosody = lower.substr(sep + 1);
  if (prosody == "f0uv") {
    v.f0uv = true;
  } else if (prosody == "nof0uv" || prosody == "no-f0uv" || prosody == "no_f0uv") {
    v.f0uv = false;
  } else {
    throw UsageError("variant '" + s + "': expected f0uv or nof0uv after the speaker mode");
  }
  return v;
}

std::vector<Variant> Variant::grid() {
  return {{model::SpeakerMode::kOneHotTable, true},
          {model::SpeakerMode::kOneHotTable, false},
          {model::SpeakerMode::kEncoder, true},
          {model::SpeakerMode::kEncoder, false}};
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  TrainConfig c;
  c.batch_size = cfg.get_int("batch_size", c.batch_size);
  c.initial_learning_rate = cfg.get_double("initial_learning_rate", c.initial_learning_rate);
  c.patience = cfg.get_int("learning_rate_patience", c.patience);
  c.scale_factor = cfg.get_double("learning_scaling_factor", c.scale_factor);
  c.epochs = cfg.get_int("epochs", c.epochs);
  c.plateau_threshold = cfg.get_double("plateau_threshold", c.plateau_threshold);
  c.max_train_windows = cfg.get_int("max_train_windows", c.max_train_windows);
  c.max_validation_windows = cfg.get_int("max_validation_windows", c.max_validation_windows);
  if (c.batch_size <= 0 || c.epochs < 0 || c.patience <= 0 || !(c.initial_learning_rate > 0.0) ||
      !(c.scale_factor > 0.0 && c.scale_factor < 1.0) || c.plateau_threshold < 0.0 ||
      c.max_train_windows < 0 || c.max_validation_windows < 0) {
    throw UsageError("invalid training configuration");
  }
  return c;
}

void TrainConfig::to_config(KeyValueConfig& cfg) const {
  cfg.set("batch_size", std::to_string(batch_size));
  cfg.set("initial_learning_rate", format_double(initial_learning_rate));
  cfg.set("learning_rate_patience", std::to_string(patience));
  cfg.set("learning_scaling_factor", format_double(scale_factor));
  cfg.set("epochs", std::to_string(epochs));
  cfg.set("plateau_threshold", format_double(plateau_threshold));
  cfg.set("max_train_windows", std::to_string(max_train_windows));
  cfg.set("max_validation_windows", std::to_string(max_validation_windows));
}

// ---------------------------------------------------------------------------
// Scheduler and log

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor, double threshold)
    : lr_(lr),
      patience_(patience),
      factor_(factor),
      threshold_(threshold),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(lr > 0.0) || patience <= 0 || !(factor > 0.0 && factor < 1.0) || threshold < 0.0) {
    throw UsageError("invalid learning-rate schedule");
  }
}

bool PlateauScheduler::observe(double validation_loss) {
  improved_ = validation_loss <= best_ - threshold_;
  if (improved_) {
    best_ = validation_loss;
    bad_ = 0;
    return false;
  }
  if (++bad_ >= patience_) {
    lr_ *= factor_;
    bad_ = 0;
    return true;
  }
  return false;
}

double RunLog::best_val_nll() const {
  for (const auto& e : epochs) {
    if (e.epoch == best_epoch) return e.val_nll;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::string RunLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_nll,val_nll,lr\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << csv_number(e.train_nll) << ',' << csv_number(e.val_nll) << ','
        << csv_number(e.lr) << '\n';
  }
  return out.str();
}

RunLog RunLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_nll,val_nll,lr") {
    throw DataError("not a run log (expected header 'epoch,train_nll,val_nll,lr')");
  }
  RunLog log;
  auto number = [](const std::string& s) {
    return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
  };
  double best = std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw DataError("malformed run log row '" + line + "'");
    EpochRecord r;
    try {
      r.epoch = std::stoi(f[0]);
      r.train_nll = number(f[1]);
      r.val_nll = number(f[2]);
      r.lr = number(f[3]);
    } catch (const std::logic_error&) {
      throw DataError("malformed run log row '" + line + "'");
    }
    if (r.epoch > 0 && r.val_nll < best) {
      best = r.val_nll;
      log.best_epoch = r.epoch;
    }
    log.epochs.push_back(r);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Evaluation

template <typename T>
double evaluate_nll(const model::SampleRnn<T>& model, std::span<const UtteranceData> utterances,
                    const std::map<std::string, SpeakerEmbedding>& embeddings, int max_windows) {
  const auto wc = window_config(model.config());
  double total = 0.0;
  long count = 0;
  for (const auto& u : utterances) {
    if (max_windows > 0 && count >= max_windows) break;
    const auto& e = embedding_for(embeddings, u.speaker);
    const auto windows = audio::make_windows(u.codes, u.frames, u.speaker, wc).windows;
    auto state = model.initial_state();
    for (const auto& w : windows) {
      if (max_windows > 0 && count >= max_windows) break;
      total += model.forward_training(w, e, state).mean_nll;
      ++count;
    }
  }
  if (count == 0) throw DataError("evaluation split holds no complete training windows");
  return total / static_cast<double>(count);
}

template double evaluate_nll<float>(const model::SampleRnn<float>&, std::span<const UtteranceData>,
                                    const std::map<std::string, SpeakerEmbedding>&, int);
template double evaluate_nll<double>(const model::SampleRnn<double>&,
                                     std::span<const UtteranceData>,
                                     const std::map<std::string, SpeakerEmbedding>&, int);

// ---------------------------------------------------------------------------
// Training loop

RunLog train(model::SampleRnn<float>& model, std::span<const UtteranceData> train_set,
             std::span<const UtteranceData> validation_set,
             const std::map<std::string, SpeakerEmbedding>& embeddings, const TrainConfig& config,
             const std::filesystem::path& out_dir, const TrainHooks& hooks) {
  using Clock = std::chrono::steady_clock;
  std::filesystem::create_directories(out_dir);
  const auto wc = window_config(model.config());

  struct Item {
    const SpeakerEmbedding* embedding;
    std::vector<audio::TrainingWindow> windows;
  };
  std::vector<Item> items;
  for (const auto& u : train_set) {
    auto result = audio::make_windows(u.codes, u.frames, u.speaker, wc);
    if (result.windows.empty()) continue;
    items.push_back({&embedding_for(embeddings, u.speaker), std::move(result.windows)});
  }
  if (items.empty()) throw DataError("training split holds no complete training windows");
  if (validation_set.empty()) throw DataError("validation split is empty");

  RunLog log;
  log.last_checkpoint = out_dir / "last.ckpt";
  log.best_checkpoint = out_dir / "best.ckpt";
  const auto log_path = out_dir / "runlog.csv";
  auto meta = [&](int epoch) {
    return std::map<std::string, std::string>{{"epoch", std::to_string(epoch)}};
  };

  auto t0 = Clock::now();
  EpochRecord initial;
  initial.epoch = 0;
  initial.train_nll = std::numeric_limits<double>::quiet_NaN();
  initial.val_nll = evaluate_nll(model, validation_set, embeddings, config.max_validation_windows);
  initial.lr = config.initial_learning_rate;
  initial.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  log.epochs.push_back(initial);
  model::save_checkpoint(log.last_checkpoint, model, meta(0));
  write_text_file(log_path, log.to_csv());
  spdlog::info("epoch 0: validation NLL {:.4f} nats/sample", initial.val_nll);
  if (hooks.on_epoch) hooks.on_epoch(0, model);

  PlateauScheduler scheduler(config.initial_learning_rate, config.patience, config.scale_factor,
                             config.plateau_threshold);
  nn::Adam<float> adam;
  auto grads = model.params().zeros_like();
  std::mt19937_64 rng(config.seed);

  struct Lane {
    std::size_t item = 0;
    std::size_t next = 0;
    model::SampleRnn<float>::State state;
    bool active = false;
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    t0 = Clock::now();
    const double lr = scheduler.lr();
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::deque<std::size_t> queue(order.begin(), order.end());
    std::vector<Lane> lanes(std::min<std::size_t>(config.batch_size, items.size()));
    auto refill = [&](Lane& lane) {
      lane.active = !queue.empty();
      if (!lane.active) return;
      lane.item = queue.front();
      queue.pop_front();
      lane.next = 0;
      lane.state = model.initial_state();
    };
    for (auto& lane : lanes) refill(lane);

    double loss_sum = 0.0;
    long windows = 0;
    bool capped = false;
    while (!capped) {
      std::vector<Lane*> active;
      for (auto& lane : lanes) {
        if (lane.active) active.push_back(&lane);
      }
      if (active.empty()) break;
      if (config.max_train_windows > 0) {
        const long room = config.max_train_windows - windows;
        if (room <= 0) break;
        if (static_cast<long>(active.size()) > room) active.resize(static_cast<std::size_t>(room));
      }
      grads.set_zero();
      const double scale = 1.0 / static_cast<double>(active.size());
      try {
        for (Lane* lane : active) {
          const auto& item = items[lane->item];
          const auto r = model.forward_training(item.windows[lane->next], *item.embedding,
                                                lane->state, &grads, scale);
          loss_sum += r.mean_nll;
          ++windows;
          if (++lane->next == item.windows.size()) refill(*lane);
        }
        for (const auto& g : grads.named()) {
          if (!g.tensor->allFinite()) throw NumericalError("non-finite gradient in " + g.name);
        }
      } catch (const NumericalError& e) {
        auto restored = model::load_checkpoint<float>(log.last_checkpoint, &model.spec());
        model::copy_params(restored, model);
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                             "; parameters restored from " + log.last_checkpoint.string() + ")");
      }
      adam.step(model.params().named(), grads.named(), lr);
      if (config.max_train_windows > 0 && windows >= config.max_train_windows) capped = true;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_nll = loss_sum / static_cast<double>(windows);
    rec.val_nll = evaluate_nll(model, validation_set, embeddings, config.max_validation_windows);
    rec.lr = lr;
    if (!std::isfinite(rec.val_nll)) {
      auto restored = model::load_checkpoint<float>(log.last_checkpoint, &model.spec());
      model::copy_params(restored, model);
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch) +
                           "; parameters restored from " + log.last_checkpoint.string());
    }
    const bool reduced = scheduler.observe(rec.val_nll);
    if (scheduler.improved()) {
      log.best_epoch = epoch;
      model::save_checkpoint(log.best_checkpoint, model, meta(epoch));
    }
    model::save_checkpoint(log.last_checkpoint, model, meta(epoch));
    rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    log.epochs.push_back(rec);
    write_text_file(log_path, log.to_csv());
    spdlog::info("epoch {}: train {:.4f} val {:.4f} nats/sample, lr {:.3g}, {} windows, {:.1f} s{}",
                 epoch, rec.train_nll, rec.val_nll, lr, windows, rec.seconds,
                 reduced ? " (learning rate reduced)" : "");
    if (hooks.on_epoch) hooks.on_epoch(epoch, model);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Grid

std::vector<UtteranceData> without_f0uv(std::span<const UtteranceData> data,
                                        const conditioning::FeatureLayout& layout) {
  std::vector<UtteranceData> out;
  out.reserve(data.size());
  for (const auto& u : data) {
    UtteranceData v = u;
    v.frames = conditioning::drop_f0uv(u.frames, layout);
    out.push_back(std::move(v));
  }
  return out;
}

model::ModelSpec variant_spec(const Variant& v, const model::ModelConfig& config,
                              const conditioning::FeatureLayout& layout_with_f0uv,
                              std::span<const std::string> training_speakers) {
  if (!layout_with_f0uv.f0uv) throw UsageError("variant_spec expects a layout with logF0/UV");
  model::ModelSpec spec;
  spec.config = config;
  spec.layout = layout_with_f0uv;
  spec.layout.f0uv = v.f0uv;
  spec.speaker_mode = v.speaker;
  spec.speakers.assign(training_speakers.begin(), training_speakers.end());
  return spec;
}

std::map<std::string, SpeakerEmbedding> variant_embeddings(
    const Variant& v, std::span<const std::string> training_speakers,
    const std::map<std::string, SpeakerEmbedding>& cached) {
  std::map<std::string, SpeakerEmbedding> out;
  for (std::size_t i = 0; i < training_speakers.size(); ++i) {
    const auto& s = training_speakers[i];
    if (v.speaker == model::SpeakerMode::kOneHotTable) {
      SpeakerEmbedding e;
      e.speaker_id = s;
      e.provenance = OneHotProvenance{static_cast<int>(i)};
      out[s] = e;
    } else {
      const auto it = cached.find(s);
      if (it == cached.end()) {
        throw DataError("missing cached encoder embedding for speaker '" + s +
                        "' (run 'samplernn extract-embeddings')");
      }
      out[s] = it->second;
    }
  }
  return out;
}

std::vector<RunLog> run_grid(const GridInputs& inputs, const TrainConfig& config,
                             const std::filesystem::path& out_dir,
                             std::span<const Variant> variants) {
  const auto all = Variant::grid();
  if (variants.empty()) variants = all;
  const auto train_nof0 = without_f0uv(inputs.train, inputs.layout);
  const auto val_nof0 = without_f0uv(inputs.validation, inputs.layout);
  std::vector<RunLog> logs;
  for (const auto& v : variants) {
    const auto spec = variant_spec(v, inputs.model_config, inputs.layout, inputs.speakers);
    const auto embeddings = variant_embeddings(v, inputs.speakers, inputs.encoder_embeddings);
    model::SampleRnn<float> model(spec, config.seed);
    spdlog::info("training variant {}", v.name());
    auto log = train(model, v.f0uv ? std::span<const UtteranceData>(inputs.train) : train_nof0,
                     v.f0uv ? std::span<const UtteranceData>(inputs.validation) : val_nof0,
                     embeddings, config, out_dir / v.name());
    log.variant = v.name();
    logs.push_back(std::move(log));
  }
  return logs;
}

}  // namespace samplernn::training
