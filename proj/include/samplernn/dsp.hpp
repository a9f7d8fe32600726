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

// Short-time spectral analysis shared by the encoders and the evaluation
// metrics.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace samplernn::dsp {

/// `length` samples centred on `center`, zero outside the signal.
std::vector<double> centered_frame(std::span<const double> samples, std::int64_t center,
                                   int length);

std::vector<double> hamming_window(int length);

/// |FFT|^2 of the windowed frame zero-padded to `nfft`; nfft/2 + 1 bins.
std::vector<double> power_spectrum(std::span<const double> frame,
                                   std::span<const double> window, int nfft);

class MelFilterbank {
 public:
  MelFilterbank(int num_filters, int nfft, int sample_rate, double low_hz = 0.0,
                double high_hz = -1.0);

  int num_filters() const { return static_cast<int>(weights_.rows()); }
  /// Filter energies for one power spectrum.
  Eigen::VectorXd apply(std::span<const double> power) const;

 private:
  Eigen::MatrixXd weights_;  // filters x bins
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// c_k = (1/M) * sum_m x_m cos(pi k (m + 0.5) / M), k = 0..num_coeffs-1.
Eigen::VectorXd dct(const Eigen::VectorXd& x, int num_coeffs);

struct SpectralConfig {
  int sample_rate = 16000;
  int window = 400;  // 25 ms
  int hop = 80;      // 5 ms
  int nfft = 512;
  int num_filters = 40;
  int num_coeffs = 25;  // c0..c24
  double log_floor = 1e-10;
};

/// Columns are frames centred at hop*n + hop/2, n = 0..ceil(N/hop)-1.
/// Rows are cepstral coefficients c0..c(num_coeffs-1) computed from the
/// natural-log mel magnitude spectrum.
Eigen::MatrixXd mel_cepstra(std::span<const double> samples, const SpectralConfig& config);

/// Log mel filterbank energies (rows = filters), same framing as mel_cepstra.
Eigen::MatrixXd log_mel_energies(std::span<const double> samples,
                                 const SpectralConfig& config);

/// Number of frames produced for `num_samples` at `hop`.
inline std::int64_t num_frames(std::int64_t num_samples, int hop) {
  return (num_samples + hop - 1) / hop;
}

}  // namespace samplernn::dsp
