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

// Minimal SVG line charts for run logs and distortion tables.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "samplernn/evaluation.hpp"
#include "samplernn/training.hpp"

namespace samplernn::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // NaN entries are skipped
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool log_x = false;
};

/// Panels side by side in one figure.
std::string render_svg(std::span<const Panel> panels, const std::string& title);

/// Train and validation NLL against epoch, one pair of lines per run.
std::string loss_curves_svg(std::span<const std::pair<std::string, training::RunLog>> runs);

/// MCD and RMSE-F0 against seed length (two panels).
std::string adaptation_svg(std::span<const std::pair<std::string, std::vector<evaluation::CurvePoint>>> curves);

struct EpochDistortion {
  int epoch = 0;
  double mcd_db = 0.0;
  double rmse_f0_hz = 0.0;
};

std::string epoch_distortion_csv(std::span<const EpochDistortion> rows);
std::vector<EpochDistortion> parse_epoch_distortion_csv(const std::string& text);

/// MCD and RMSE-F0 against epoch (two panels).
std::string epoch_distortion_svg(
    std::span<const std::pair<std::string, std::vector<EpochDistortion>>> runs);

}  // namespace samplernn::plot
