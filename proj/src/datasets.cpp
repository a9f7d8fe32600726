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

#include "samplernn/datasets.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "samplernn/config.hpp"
#include "samplernn/container.hpp"
#include "samplernn/error.hpp"

namespace samplernn::datasets {

namespace {

constexpr std::string_view kManifestHeader = "# samplernn split manifest v1";

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Per-speaker generator so one speaker's split does not depend on the others.
std::mt19937_64 speaker_rng(std::uint64_t seed, const std::string& speaker) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fnv1a(speaker)),
                    static_cast<std::uint32_t>(fnv1a(speaker) >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::vector<const UtteranceEntry*> shuffled(const SpeakerEntry& s, std::uint64_t seed) {
  std::vector<const UtteranceEntry*> utts;
  for (const auto& u : s.utterances) utts.push_back(&u);
  std::sort(utts.begin(), utts.end(), [](auto* a, auto* b) { return a->id < b->id; });
  auto rng = speaker_rng(seed, s.id);
  std::shuffle(utts.begin(), utts.end(), rng);
  return utts;
}

// Greedy accumulation: takes utterances from `next` until `target` is met.
double take(const std::vector<const UtteranceEntry*>& utts, std::size_t& next, double target,
            Split split, const std::string& speaker, std::vector<Assignment>& out) {
  double acc = 0.0;
  while (acc < target && next < utts.size()) {
    out.push_back({speaker, utts[next]->id, split, utts[next]->duration});
    acc += utts[next]->duration;
    ++next;
  }
  return acc;
}

// Returns an empty string on success, otherwise the violated constraint.
std::string assign_base(const SpeakerEntry& s, const SplitTargets& t, std::uint64_t seed,
                        std::vector<Assignment>& out) {
  const auto utts = shuffled(s, seed);
  std::size_t next = 0;
  std::vector<Assignment> local;
  if (take(utts, next, t.validation_seconds, Split::kValidation, s.id, local) <
      t.validation_seconds) {
    return "not enough speech for a " + format_double(t.validation_seconds) + " s validation set";
  }
  if (take(utts, next, t.test_seconds, Split::kTest, s.id, local) < t.test_seconds) {
    return "not enough speech for a " + format_double(t.test_seconds) + " s test set";
  }
  if (next == utts.size()) return "no utterances left for training";
  for (; next < utts.size(); ++next) {
    local.push_back({s.id, utts[next]->id, Split::kTrain, utts[next]->duration});
  }
  out.insert(out.end(), local.begin(), local.end());
  return {};
}

std::string assign_adaptation(const SpeakerEntry& s, const SplitTargets& t, std::uint64_t seed,
                              std::vector<Assignment>& out) {
  const auto utts = shuffled(s, seed);
  std::size_t next = 0;
  std::vector<Assignment> local;
  if (take(utts, next, t.adapt_test_seconds, Split::kAdaptTest, s.id, local) <
      t.adapt_test_seconds) {
    return "not enough speech for a " + format_double(t.adapt_test_seconds) +
           " s adaptation test set";
  }
  double whole_seconds = 0.0;
  for (; next < utts.size(); ++next) {
    local.push_back({s.id, utts[next]->id, Split::kSeedPool, utts[next]->duration});
    whole_seconds += std::floor(utts[next]->duration);
  }
  if (whole_seconds < t.seed_pool_seconds) {
    return "seed pool has " + format_double(whole_seconds) + " whole seconds, needs " +
           format_double(t.seed_pool_seconds);
  }
  out.insert(out.end(), local.begin(), local.end());
  return {};
}

}  // namespace

double SpeakerEntry::total_duration() const {
  double t = 0.0;
  for (const auto& u : utterances) t += u.duration;
  return t;
}

double CorpusCatalog::total_duration() const {
  double t = 0.0;
  for (const auto& s : speakers) t += s.total_duration();
  return t;
}

const SpeakerEntry& CorpusCatalog::speaker(const std::string& id) const {
  const auto it = std::lower_bound(speakers.begin(), speakers.end(), id,
                                   [](const SpeakerEntry& s, const std::string& k) { return s.id < k; });
  if (it == speakers.end() || it->id != id) throw DataError("speaker '" + id + "' is not in the catalog");
  return *it;
}

const UtteranceEntry& CorpusCatalog::utterance(const std::string& speaker_id,
                                               const std::string& id) const {
  const auto& s = speaker(speaker_id);
  for (const auto& u : s.utterances) {
    if (u.id == id) return u;
  }
  throw DataError("utterance '" + id + "' of speaker '" + speaker_id + "' is not in the catalog");
}

double trimmed_duration(const std::filesystem::path& wav, const audio::VadConfig& vad) {
  const auto clip = audio::load_waveform(wav, "", wav.stem().string());
  const auto trimmed = audio::trim_silences(clip, vad);
  return trimmed.clip.duration();
}

CorpusCatalog build_catalog(std::span<const std::filesystem::path> roots,
                            const DurationProbe& probe) {
  namespace fs = std::filesystem;
  const DurationProbe measure = probe ? probe : [](const fs::path& p) { return trimmed_duration(p); };
  CorpusCatalog catalog;
  std::map<std::string, std::string> owner;  // speaker -> corpus root
  for (const auto& root : roots) {
    const auto table = root / "speakers.tsv";
    if (!fs::exists(table)) {
      throw DataError(root.string() + ": missing speakers.tsv (speaker<TAB>gender per line)");
    }
    std::istringstream in(read_text_file(table));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      const auto f = split_tabs(line);
      if (f.size() != 2 || f[0].empty() || f[1].empty()) {
        throw DataError(table.string() + ":" + std::to_string(line_no) +
                        ": expected 'speaker<TAB>gender'");
      }
      if (const auto it = owner.find(f[0]); it != owner.end()) {
        throw DataError("speaker id '" + f[0] + "' appears in both " + it->second + " and " +
                        root.string() + "; namespace speaker ids by corpus");
      }
      owner[f[0]] = root.string();
      SpeakerEntry s;
      s.id = f[0];
      s.gender = f[1];
      s.corpus = root.filename().string();
      const auto dir = root / s.id;
      if (!fs::is_directory(dir)) {
        catalog.skipped.push_back(dir.string() + ": speaker directory missing");
        continue;
      }
      std::vector<fs::path> wavs;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".wav") wavs.push_back(e.path());
      }
      std::sort(wavs.begin(), wavs.end());
      for (const auto& wav : wavs) {
        auto lab = wav;
        lab.replace_extension(".lab");
        if (!fs::exists(lab)) {
          catalog.skipped.push_back(wav.string() + ": no label file");
          spdlog::warn("{}: no label file, utterance excluded", wav.string());
          continue;
        }
        UtteranceEntry u;
        u.id = wav.stem().string();
        u.wav = wav;
        u.labels = lab;
        try {
          u.duration = measure(wav);
        } catch (const Error& e) {
          catalog.skipped.push_back(wav.string() + ": " + e.what());
          spdlog::warn("{}: unreadable, skipped ({})", wav.string(), e.what());
          continue;
        }
        if (!(u.duration > 0.0)) {
          catalog.skipped.push_back(wav.string() + ": no speech after trimming");
          continue;
        }
        s.utterances.push_back(std::move(u));
      }
      catalog.speakers.push_back(std::move(s));
    }
  }
  std::sort(catalog.speakers.begin(), catalog.speakers.end(),
            [](const SpeakerEntry& a, const SpeakerEntry& b) { return a.id < b.id; });
  return catalog;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
    case Split::kSeedPool: return "seed_pool";
    case Split::kAdaptTest: return "adapt_test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation" || s == "val") return Split::kValidation;
  if (s == "test") return Split::kTest;
  if (s == "seed_pool") return Split::kSeedPool;
  if (s == "adapt_test") return Split::kAdaptTest;
  throw DataError("unknown split '" + s + "'");
}

SplitTargets SplitTargets::scaled(double factor) const {
  if (!(factor > 0.0)) throw UsageError("duration scale factor must be positive");
  return {validation_seconds * factor, test_seconds * factor, adapt_test_seconds * factor,
          seed_pool_seconds * factor};
}

std::vector<Assignment> SplitPlan::select(Split split) const {
  std::vector<Assignment> out;
  for (const auto& a : assignments) {
    if (a.split == split) out.push_back(a);
  }
  return out;
}

std::vector<Assignment> SplitPlan::select(const std::string& speaker, Split split) const {
  std::vector<Assignment> out;
  for (const auto& a : assignments) {
    if (a.split == split && a.speaker == speaker) out.push_back(a);
  }
  return out;
}

double SplitPlan::seconds(const std::string& speaker, Split split) const {
  double t = 0.0;
  for (const auto& a : assignments) {
    if (a.split == split && a.speaker == speaker) t += a.duration;
  }
  return t;
}

SplitPlan make_split_plan(const CorpusCatalog& catalog, int n_per_gender, int n_adapt_per_gender,
                          std::uint64_t seed, const SplitTargets& targets) {
  if (n_per_gender <= 0 || n_adapt_per_gender < 0) {
    throw UsageError("speaker counts per gender must be positive");
  }
  SplitPlan plan;
  plan.seed = seed;
  plan.targets = targets;
  std::map<std::string, std::vector<const SpeakerEntry*>> by_gender;
  for (const auto& s : catalog.speakers) {
    if (!s.utterances.empty()) by_gender[s.gender].push_back(&s);
  }
  if (by_gender.empty()) throw DataError("catalog holds no speakers with usable utterances");
  std::mt19937_64 rng(seed);
  for (auto& [gender, speakers] : by_gender) {
    std::sort(speakers.begin(), speakers.end(), [](auto* a, auto* b) {
      const double da = a->total_duration(), db = b->total_duration();
      return da != db ? da > db : a->id < b->id;
    });
    if (static_cast<int>(speakers.size()) < n_per_gender) {
      throw DataError("gender '" + gender + "' has " + std::to_string(speakers.size()) +
                      " speakers, " + std::to_string(n_per_gender) + " base speakers required");
    }
    for (int i = 0; i < n_per_gender; ++i) {
      const auto* s = speakers[i];
      if (auto why = assign_base(*s, targets, seed, plan.assignments); !why.empty()) {
        throw DataError("base speaker '" + s->id + "': " + why);
      }
      plan.base_speakers.push_back(s->id);
      plan.gender[s->id] = gender;
    }
    std::vector<const SpeakerEntry*> rest(speakers.begin() + n_per_gender, speakers.end());
    std::sort(rest.begin(), rest.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::shuffle(rest.begin(), rest.end(), rng);
    int picked = 0;
    std::vector<std::string> rejected;
    for (const auto* s : rest) {
      if (picked == n_adapt_per_gender) break;
      std::vector<Assignment> local;
      if (auto why = assign_adaptation(*s, targets, seed, local); !why.empty()) {
        rejected.push_back(s->id + " (" + why + ")");
        continue;
      }
      plan.assignments.insert(plan.assignments.end(), local.begin(), local.end());
      plan.adaptation_speakers.push_back(s->id);
      plan.gender[s->id] = gender;
      ++picked;
    }
    if (picked < n_adapt_per_gender) {
      std::string msg = "gender '" + gender + "': only " + std::to_string(picked) + " of " +
                        std::to_string(n_adapt_per_gender) + " adaptation speakers qualify";
      for (const auto& r : rejected) msg += "; " + r;
      throw DataError(msg);
    }
  }
  std::sort(plan.base_speakers.begin(), plan.base_speakers.end());
  std::sort(plan.adaptation_speakers.begin(), plan.adaptation_speakers.end());
  std::sort(plan.assignments.begin(), plan.assignments.end(),
            [](const Assignment& a, const Assignment& b) {
              return a.speaker != b.speaker ? a.speaker < b.speaker : a.utterance < b.utterance;
            });
  return plan;
}

void SplitPlan::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  out << "# seed\t" << seed << '\n';
  out << "# targets\t" << format_double(targets.validation_seconds) << '\t'
      << format_double(targets.test_seconds) << '\t' << format_double(targets.adapt_test_seconds)
      << '\t' << format_double(targets.seed_pool_seconds) << '\n';
  out << "speaker\tgender\trole\tutterance\tsplit\tduration\n";
  for (const auto& a : assignments) {
    const bool base = std::binary_search(base_speakers.begin(), base_speakers.end(), a.speaker);
    out << a.speaker << '\t' << gender.at(a.speaker) << '\t' << (base ? "base" : "adaptation")
        << '\t' << a.utterance << '\t' << to_string(a.split) << '\t' << format_double(a.duration)
        << '\n';
  }
  write_text_file(path, out.str());
}

SplitPlan SplitPlan::load(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  const std::string src = path.string();
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw DataError(src + ": not a split manifest (run 'samplernn prepare')");
  }
  SplitPlan plan;
  std::set<std::string> base, adapt;
  std::set<std::pair<std::string, std::string>> seen;
  int line_no = 1;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_tabs(line);
      if (f[0] == "# seed" && f.size() == 2) {
        plan.seed = std::stoull(f[1]);
      } else if (f[0] == "# targets" && f.size() == 5) {
        plan.targets = {std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
      } else if (f[0] == "speaker") {
        continue;
      } else if (f.size() == 6) {
        Assignment a{f[0], f[3], split_from_string(f[4]), std::stod(f[5])};
        if (!seen.emplace(a.speaker, a.utterance).second) {
          throw DataError(src + ":" + std::to_string(line_no) + ": utterance '" + a.utterance +
                          "' listed twice");
        }
        plan.gender[a.speaker] = f[1];
        (f[2] == "base" ? base : adapt).insert(a.speaker);
        plan.assignments.push_back(std::move(a));
      } else {
        throw DataError(src + ":" + std::to_string(line_no) + ": malformed manifest line");
      }
    }
  } catch (const std::logic_error&) {
    throw DataError(src + ":" + std::to_string(line_no) + ": malformed number");
  }
  plan.base_speakers.assign(base.begin(), base.end());
  plan.adaptation_speakers.assign(adapt.begin(), adapt.end());
  return plan;
}

}  // namespace samplernn::datasets
