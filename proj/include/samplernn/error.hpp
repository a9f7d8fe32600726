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

#include <stdexcept>
#include <string>

namespace samplernn {

/// Process exit codes shared by every command.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumerical = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad flags, bad config values, inconsistent dimensions requested by a caller.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

/// Unreadable or inconsistent input data (audio, labels, manifests, checkpoints).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Non-finite losses or other numerical breakdowns.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ExitCode::kNumerical, what) {}
};

}  // namespace samplernn
