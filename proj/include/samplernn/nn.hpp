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

// Parameter containers and the Adam optimizer shared by the waveform model and
// the speech encoder.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "samplernn/error.hpp"

namespace samplernn::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct NamedTensor {
  std::string name;
  Matrix<T>* tensor = nullptr;
};

template <typename T>
void uniform_init(Matrix<T>& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

template <typename T>
void normal_init(Matrix<T>& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

/// Sum of squares over every tensor, for diagnostics.
template <typename T>
double squared_norm(const std::vector<NamedTensor<T>>& tensors) {
  double acc = 0.0;
  for (const auto& t : tensors) acc += static_cast<double>(t.tensor->squaredNorm());
  return acc;
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are allocated on the first step
/// and keyed by tensor position.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(const std::vector<NamedTensor<T>>& params,
            const std::vector<NamedTensor<T>>& grads, double lr) {
    if (params.size() != grads.size()) throw UsageError("Adam: parameter/gradient mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Matrix<T>::Zero(p.tensor->rows(), p.tensor->cols()));
        v_.push_back(Matrix<T>::Zero(p.tensor->rows(), p.tensor->cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(options_.beta1);
    const T b2 = static_cast<T>(options_.beta2);
    const T step = static_cast<T>(lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(options_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& g = *grads[i].tensor;
      auto& m = m_[i];
      auto& v = v_[i];
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
      params[i].tensor->array() -=
          step * m.array() / ((v.array().sqrt() * inv_sqrt_bc2) + eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  long t_ = 0;
};

}  // namespace samplernn::nn
