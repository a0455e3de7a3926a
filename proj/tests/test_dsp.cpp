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

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "scalesep/errors.hpp"
#include "scalesep/ops.hpp"

namespace scalesep {
namespace {

using testing::random_signal;
using testing::wave;

StftConfig config(int n, int hop) {
  StftConfig c;
  c.window_size = n;
  c.hop = hop;
  return c;
}

TEST(Window, PeriodicHannSizeFour) {
  const auto w = make_window(config(4, 2));
  const std::vector<Real> expected{0, 0.5, 1, 0.5};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w[i], expected[i], 1e-15);
}

TEST(Window, OverlapAddIsConstant) {
  // Window sums to a constant at hop N/k; the squared window is what the
  // synthesis divides by, so it only needs to stay positive.
  for (auto [n, hop] : {std::pair{4, 2}, std::pair{128, 64}, std::pair{128, 32},
                        std::pair{256, 128}}) {
    const auto w = make_window(config(n, hop));
    for (int offset = 0; offset < hop; ++offset) {
      Real sum = 0, sq = 0;
      for (int i = offset; i < n; i += hop) {
        sum += w[i];
        sq += w[i] * w[i];
      }
      EXPECT_NEAR(sum, n / (2.0 * hop), 1e-12) << n << "/" << hop;
      EXPECT_GT(sq, 0);
    }
  }
}

TEST(Window, RejectsUnsupportedKindsAndHops) {
  EXPECT_THROW(parse_window_kind("blackman"), ConfigError);
  EXPECT_THROW(config(127, 64).validate(), ConfigError);
  EXPECT_THROW(config(128, 48).validate(), ConfigError);
  EXPECT_THROW(config(128, 128).validate(), ConfigError);
  EXPECT_THROW(config(128, 0).validate(), ConfigError);
}

TEST(Stft, ShapeLaw) {
  const StftConfig c = config(128, 64);
  EXPECT_EQ(c.bins(), 65);
  for (std::int64_t len : {1, 63, 64, 129, 1000, 8000}) {
    const auto spec = stft(wave(random_signal(1, len)), c);
    EXPECT_EQ(spec.frames(), len / 64 + 1) << len;
    EXPECT_EQ(spec.bins(), 65);
  }
  EXPECT_EQ(stft(wave(std::vector<Real>(8000, 0.0)), c).frames(), 126);
}

TEST(Stft, ZeroInZeroOut) {
  const auto spec = stft(wave(std::vector<Real>(8000, 0.0)), config(128, 64));
  EXPECT_EQ(spec.planes.max_abs(), 0);
}

TEST(Stft, MatchesNaiveDft) {
  for (auto [n, hop, len] : {std::tuple{16, 8, 50}, std::tuple{128, 64, 300},
                             std::tuple{32, 8, 77}}) {
    const auto x = random_signal(2, len);
    const auto spec = stft(wave(x), config(n, hop));
    const auto ref = testing::naive_stft(x, n, hop);
    const std::int64_t frames = spec.frames(), bins = spec.bins();
    ASSERT_EQ(static_cast<std::int64_t>(ref.size()), frames);
    for (std::int64_t t = 0; t < frames; ++t) {
      for (std::int64_t f = 0; f < bins; ++f) {
        const auto& r = ref[t][f];
        EXPECT_NEAR(spec.planes[t * bins + f], r.real(), 1e-10);
        EXPECT_NEAR(spec.planes[(frames + t) * bins + f], r.imag(), 1e-10);
      }
    }
  }
}

TEST(Stft, BinCenteredCosineConcentratesEnergy) {
  const int n = 128, k = 16;
  std::vector<Real> x(2048);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = std::cos(2 * std::numbers::pi * k * static_cast<Real>(i) / n);
  }
  const auto spec = stft(wave(x), config(n, 64));
  const auto ref = testing::naive_stft(x, n, 64);
  const std::int64_t frames = spec.frames(), bins = spec.bins();
  for (std::int64_t t = 2; t < frames - 2; ++t) {
    Real total = 0, at_k = 0;
    for (std::int64_t f = 0; f < bins; ++f) {
      const Real re = spec.planes[t * bins + f], im = spec.planes[(frames + t) * bins + f];
      const Real e = re * re + im * im;
      total += e;
      if (f == k) at_k = e;
      EXPECT_NEAR(std::sqrt(e), std::abs(ref[t][f]), 1e-9);
    }
    // Periodic hann leaks into the two neighbours at half amplitude.
    EXPECT_NEAR(at_k / total, 2.0 / 3.0, 1e-9);
  }
}

TEST(Stft, Linearity) {
  const auto x = random_signal(3, 1000), y = random_signal(4, 1000);
  std::vector<Real> z(1000);
  for (int i = 0; i < 1000; ++i) z[i] = 2.5 * x[i] - 0.75 * y[i];
  const StftConfig c = config(128, 64);
  const auto sx = stft(wave(x), c), sy = stft(wave(y), c), sz = stft(wave(z), c);
  for (std::int64_t i = 0; i < sz.planes.size(); ++i) {
    EXPECT_NEAR(sz.planes[i], 2.5 * sx.planes[i] - 0.75 * sy.planes[i], 1e-10);
  }
}

TEST(Istft, PerfectReconstruction) {
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t len : {129, 1000, 4000, 8000}) {
    for (auto [n, hop] : {std::pair{128, 64}, std::pair{256, 128}, std::pair{128, 32}}) {
      const auto x = random_signal(static_cast<std::uint64_t>(len), len);
      const StftConfig c = config(n, hop);
      const Waveform y = istft(stft(wave(x), c), c, len);
      Real peak = 0, err = 0;
      for (std::int64_t i = 0; i < len; ++i) {
        peak = std::max(peak, std::abs(x[i]));
        err = std::max(err, std::abs(x[i] - y.samples[i]));
      }
      EXPECT_LT(err, 1e-6 * peak) << len << " " << n << "/" << hop;
    }
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
            1.0);
}

TEST(Istft, TruncatesAndPads) {
  const StftConfig c = config(128, 64);
  const auto x = random_signal(5, 1000);
  const auto spec = stft(wave(x), c);
  const Waveform shorter = istft(spec, c, 500);
  ASSERT_EQ(shorter.length(), 500);
  for (int i = 0; i < 500; ++i) EXPECT_NEAR(shorter.samples[i], x[i], 1e-9);
  const Waveform longer = istft(spec, c, 2000);
  ASSERT_EQ(longer.length(), 2000);
  EXPECT_EQ(longer.samples.back(), 0);
}

TEST(Istft, ZeroSpectrumAndShapeMismatch) {
  const StftConfig c = config(128, 64);
  ComplexSpectrogram zero{Tensor({2, 10, 65})};
  const Waveform y = istft(zero, c, 576);
  for (Real v : y.samples) EXPECT_EQ(v, 0);
  ComplexSpectrogram wrong{Tensor({2, 10, 33})};
  EXPECT_THROW(istft(wrong, c, 576), ShapeError);
}

TEST(Istft, AdjointIdentity) {
  // <istft(S), g> == <S, istft^T(g)> for the batched differentiable op.
  const StftConfig c = config(32, 16);
  StftEngine engine(c);
  const std::int64_t len = 100;
  const Tensor s = testing::random_tensor(6, {2, c.frames(len), c.bins(), 2});
  const Tensor g = testing::random_tensor(7, {2, len});
  Var sv = parameter(s);
  Var y = istft_batch(sv, engine, len);
  const Real lhs = testing::dot(y.value(), g);
  Var loss = make_result(Tensor({1}, lhs), {y},
                         [y, g](Node& self) { y.node()->grad_buffer().add_(g, self.grad[0]); });
  backward(loss);
  EXPECT_NEAR(lhs, testing::dot(s, sv.grad()), 1e-9 * std::abs(lhs) + 1e-12);
}

TEST(Waveform, Validation) {
  EXPECT_THROW(wave({}).validate(), ConfigError);
  EXPECT_THROW(wave({1.0, std::nan("")}).validate(), ConfigError);
  Waveform w = wave({1.0});
  w.sample_rate = 0;
  EXPECT_THROW(w.validate(), ConfigError);
}

}  // namespace
}  // namespace scalesep
