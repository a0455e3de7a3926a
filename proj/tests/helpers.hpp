// Copyright 2026 The scalesep Authors
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

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "scalesep/autograd.hpp"
#include "scalesep/dsp.hpp"
#include "scalesep/ops.hpp"

namespace scalesep::testing {

inline std::vector<Real> random_signal(std::uint64_t seed, std::int64_t n, Real scale = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> nd(0, scale);
  std::vector<Real> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = nd(rng);
  return x;
}

inline Tensor random_tensor(std::uint64_t seed, Shape shape, Real scale = 1) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), random_signal(seed, n, scale));
}

inline Waveform wave(std::vector<Real> samples) {
  Waveform w;
  w.samples = std::move(samples);
  return w;
}

// Naive centered STFT: reflect-pad by N/2, periodic hann, one complex DFT
// per frame. Result is [T][F].
inline std::vector<std::vector<std::complex<Real>>> naive_stft(const std::vector<Real>& x,
                                                               int n_fft, int hop) {
  const auto len = static_cast<std::int64_t>(x.size());
  const int pad = n_fft / 2;
  auto at = [&](std::int64_t i) {
    // numpy-style reflect without edge repeat
    while (i < 0 || i >= len) {
      if (i < 0) i = -i;
      if (i >= len) i = 2 * (len - 1) - i;
    }
    return x[static_cast<std::size_t>(i)];
  };
  const std::int64_t frames = len / hop + 1;
  const int bins = n_fft / 2 + 1;
  std::vector<std::vector<std::complex<Real>>> out(
      static_cast<std::size_t>(frames), std::vector<std::complex<Real>>(bins));
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int f = 0; f < bins; ++f) {
      std::complex<Real> acc = 0;
      for (int n = 0; n < n_fft; ++n) {
        const Real w = std::pow(std::sin(std::numbers::pi * n / n_fft), 2);
        const Real s = at(t * hop + n - pad);
        acc += w * s * std::polar<Real>(1.0, -2 * std::numbers::pi * f * n / n_fft);
      }
      out[static_cast<std::size_t>(t)][static_cast<std::size_t>(f)] = acc;
    }
  }
  return out;
}

// Central difference of `f` along direction `dir` with respect to `param`.
inline Real directional_fd(Var& param, const Tensor& dir, const std::function<Real()>& f,
                           Real h) {
  Tensor& p = param.mutable_value();
  const Tensor saved = p;
  p.add_(dir, h);
  const Real plus = f();
  p = saved;
  p.add_(dir, -h);
  const Real minus = f();
  p = saved;
  return (plus - minus) / (2 * h);
}

inline Real dot(const Tensor& a, const Tensor& b) {
  Real s = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Scalar <weights, x> on the tape.
inline Var weighted_sum(const Var& x, const Tensor& weights) {
  Real v = 0;
  for (std::int64_t i = 0; i < weights.size(); ++i) v += x.value()[i] * weights[i];
  return make_result(Tensor({1}, v), {x}, [x, weights](Node& self) {
    x.node()->grad_buffer().add_(weights, self.grad[0]);
  });
}

// Worst entrywise |analytic - fd| / max(|analytic|, |fd|, floor) over every
// entry of `vars`, for the scalar loss built by `loss`.
inline Real max_grad_error(std::vector<Var> vars, const std::function<Var()>& loss,
                           Real h = 1e-5, Real floor = 1e-6) {
  for (auto& v : vars) v.node()->grad = Tensor();
  backward(loss());
  std::vector<Tensor> analytic;
  for (auto& v : vars) {
    analytic.push_back(v.grad().empty() ? Tensor::zeros_like(v.value()) : v.grad());
  }
  auto value = [&]() {
    NoGradGuard g;
    return loss().value()[0];
  };
  Real worst = 0;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    Tensor& p = vars[k].mutable_value();
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const Real saved = p[i];
      p[i] = saved + h;
      const Real plus = value();
      p[i] = saved - h;
      const Real minus = value();
      p[i] = saved;
      const Real fd = (plus - minus) / (2 * h);
      const Real a = analytic[k][i];
      worst = std::max(worst, std::abs(a - fd) /
                                  std::max({std::abs(a), std::abs(fd), floor}));
    }
  }
  return worst;
}

// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("scalesep_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace scalesep::testing
