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

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace samplernn {

/// Flat `key = value` configuration. '#' starts a comment. Keys mirror the
/// hyperparameter names used throughout (e.g. `gru_hidden_size`).
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  std::string format() const;
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  /// Copies every entry of `other` over this config.
  void merge(const KeyValueConfig& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  /// Throws UsageError naming the first key not in `known`.
  void check_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::string source_ = "<config>";
  std::map<std::string, std::string> entries_;
};

std::string format_double(double v);
std::string join_ints(const std::vector<int>& v, char sep = ',');

}  // namespace samplernn
