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

#include "samplernn/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>

#include "samplernn/error.hpp"

namespace samplernn::dsp {

std::vector<double> centered_frame(std::span<const double> samples, std::int64_t center,
                                   int length) {
  std::vector<double> frame(static_cast<std::size_t>(length), 0.0);
  const std::int64_t begin = center - length / 2;
  const auto n = static_cast<std::int64_t>(samples.size());
  for (int i = 0; i < length; ++i) {
    const std::int64_t k = begin + i;
    if (k >= 0 && k < n) frame[i] = samples[k];
  }
  return frame;
}

std::vector<double> hamming_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (length - 1));
  }
  return w;
}

std::vector<double> power_spectrum(std::span<const double> frame,
                                   std::span<const double> window, int nfft) {
  if (static_cast<int>(frame.size()) > nfft) throw UsageError("frame longer than FFT size");
  std::vector<double> buf(static_cast<std::size_t>(nfft), 0.0);
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i] * window[i];
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  std::vector<double> power(static_cast<std::size_t>(nfft / 2 + 1));
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
  return power;
}

double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

MelFilterbank::MelFilterbank(int num_filters, int nfft, int sample_rate, double low_hz,
                             double high_hz) {
  if (high_hz <= 0.0) high_hz = sample_rate / 2.0;
  const int bins = nfft / 2 + 1;
  weights_ = Eigen::MatrixXd::Zero(num_filters, bins);
  const double mlo = hz_to_mel(low_hz);
  const double mhi = hz_to_mel(high_hz);
  const double step = (mhi - mlo) / (num_filters + 1);
  for (int f = 0; f < num_filters; ++f) {
    const double left = mlo + f * step;
    const double centre = left + step;
    const double right = centre + step;
    for (int b = 0; b < bins; ++b) {
      const double mel = hz_to_mel(static_cast<double>(b) * sample_rate / nfft);
      if (mel > left && mel < right) {
        weights_(f, b) = mel <= centre ? (mel - left) / step : (right - mel) / step;
      }
    }
  }
}

Eigen::VectorXd MelFilterbank::apply(std::span<const double> power) const {
  Eigen::Map<const Eigen::VectorXd> p(power.data(), static_cast<Eigen::Index>(power.size()));
  return weights_ * p;
}

Eigen::VectorXd dct(const Eigen::VectorXd& x, int num_coeffs) {
  const auto m = x.size();
  Eigen::VectorXd c(num_coeffs);
  for (int k = 0; k < num_coeffs; ++k) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * k * (static_cast<double>(i) + 0.5) / m);
    }
    c[k] = acc / static_cast<double>(m);
  }
  return c;
}

Eigen::MatrixXd log_mel_energies(std::span<const double> samples,
                                 const SpectralConfig& config) {
  const auto frames = num_frames(static_cast<std::int64_t>(samples.size()), config.hop);
  const MelFilterbank bank(config.num_filters, config.nfft, config.sample_rate);
  const auto window = hamming_window(config.window);
  Eigen::MatrixXd out(config.num_filters, frames);
  for (std::int64_t n = 0; n < frames; ++n) {
    const auto frame = centered_frame(samples, n * config.hop + config.hop / 2, config.window);
    const auto power = power_spectrum(frame, window, config.nfft);
    const Eigen::VectorXd e = bank.apply(power);
    for (int f = 0; f < config.num_filters; ++f) {
      // Natural log of the filter magnitude (half the log power).
      out(f, n) = 0.5 * std::log(std::max(e[f], config.log_floor));
    }
  }
  return out;
}

Eigen::MatrixXd mel_cepstra(std::span<const double> samples, const SpectralConfig& config) {
  const Eigen::MatrixXd logmel = log_mel_energies(samples, config);
  Eigen::MatrixXd out(config.num_coeffs, logmel.cols());
  for (Eigen::Index n = 0; n < logmel.cols(); ++n) {
    out.col(n) = dct(logmel.col(n), config.num_coeffs);
  }
  return out;
}

}  // namespace samplernn::dsp
