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

#include "samplernn/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "samplernn/container.hpp"
#include "samplernn/error.hpp"

namespace samplernn {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_or_throw(const std::string& s, const std::string& key, const std::string& source) {
  T v{};
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (!s.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e) {
    throw UsageError(source + ": invalid value '" + s + "' for key '" + key + "'");
  }
  return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const std::string& key,
                          const std::string& source) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    out.push_back(parse_or_throw<T>(trim(item), key, source));
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(lineno) + ": expected `key = value`");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw UsageError(source + ":" + std::to_string(lineno) + ": empty key");
    cfg.entries_[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

std::string KeyValueConfig::format() const {
  std::ostringstream out;
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
  return out.str();
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
  write_text_file(path, format());
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_or_throw<int>(it->second, key, source_);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_or_throw<double>(it->second, key, source_);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw UsageError(source_ + ": invalid boolean '" + v + "' for key '" + key + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key,
                                              const std::vector<int>& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_list<int>(it->second, key, source_);
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_list<double>(it->second, key, source_);
}

void KeyValueConfig::check_known(const std::set<std::string>& known) const {
  for (const auto& [k, v] : entries_) {
    if (!known.count(k)) throw UsageError(source_ + ": unknown configuration key '" + k + "'");
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace samplernn
