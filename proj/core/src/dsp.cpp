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

#include "scalesep/dsp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "scalesep/errors.hpp"

namespace scalesep {
namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

// Envelope values below this are treated as uncovered samples.
constexpr Real kEnvelopeFloor = 1e-11;

// Reflect index into [0, n) without repeating the edge sample.
std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

void Waveform::validate() const {
  if (samples.empty()) throw ConfigError("waveform must have at least 1 sample");
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  for (Real v : samples) {
    if (!std::isfinite(v)) throw ConfigError("waveform has non-finite samples");
  }
}

WindowKind parse_window_kind(const std::string& name) {
  if (name == "hann") return WindowKind::kHann;
  throw ConfigError("unsupported window kind '" + name + "'");
}

std::string to_string(WindowKind kind) {
  switch (kind) {
    case WindowKind::kHann:
      return "hann";
  }
  return "unknown";
}

void StftConfig::validate() const {
  if (window_size <= 0 || window_size % 2 != 0) {
    throw ConfigError("window_size must be a positive even number");
  }
  if (hop <= 0 || hop > window_size) {
    throw ConfigError("hop must satisfy 0 < hop <= window_size");
  }
  if (window != WindowKind::kHann) throw ConfigError("unsupported window kind");
  // Periodic hann overlap-adds to a constant when N / hop is an integer >= 2.
  if (window_size % hop != 0 || window_size / hop < 2) {
    throw ConfigError("hann window requires hop = window_size / k, k >= 2");
  }
}

std::vector<Real> make_window(const StftConfig& config) {
  config.validate();
  const int n = config.window_size;
  std::vector<Real> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Real s = std::sin(std::numbers::pi * i / n);
    w[static_cast<std::size_t>(i)] = s * s;
  }
  return w;
}

struct StftEngine::Tables {
  std::vector<Real> window;
  Mat analysis_cos;   // [N, F]
  Mat analysis_sin;   // [N, F]
  Mat synthesis_cos;  // [F, N], includes the 1/N and one-sided weights
  Mat synthesis_sin;  // [F, N]
};

StftEngine::StftEngine(const StftConfig& config) : config_(config) {
  config_.validate();
  auto tables = std::make_shared<Tables>();
  const int n = config_.window_size;
  const int bins = config_.bins();
  tables->window = make_window(config_);
  tables->analysis_cos.resize(n, bins);
  tables->analysis_sin.resize(n, bins);
  tables->synthesis_cos.resize(bins, n);
  tables->synthesis_sin.resize(bins, n);
  for (int t = 0; t < n; ++t) {
    for (int k = 0; k < bins; ++k) {
      // Reduce k * t mod N first so the angle stays exact for large products.
      const Real angle =
          2 * std::numbers::pi * static_cast<Real>((k * t) % n) / n;
      const Real c = std::cos(angle), s = std::sin(angle);
      tables->analysis_cos(t, k) = c;
      tables->analysis_sin(t, k) = s;
      const Real weight = (k == 0 || k == n / 2) ? 1.0 : 2.0;
      tables->synthesis_cos(k, t) = weight * c / n;
      tables->synthesis_sin(k, t) = weight * s / n;
    }
  }
  tables_ = std::move(tables);
}

Tensor StftEngine::analyze(std::span<const Real> x) const {
  const auto length = static_cast<std::int64_t>(x.size());
  if (length < 1) throw ShapeError("stft: empty input");
  const int n = config_.window_size;
  const int bins = config_.bins();
  const std::int64_t frames = config_.frames(length);
  const std::int64_t half = n / 2;
  Mat framed(frames, n);
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) {
      const std::int64_t src = reflect_index(t * config_.hop + i - half, length);
      framed(t, i) = x[static_cast<std::size_t>(src)] *
                     tables_->window[static_cast<std::size_t>(i)];
    }
  }
  Mat re = framed * tables_->analysis_cos;
  Mat im = -(framed * tables_->analysis_sin);
  Tensor out({frames, bins, 2});
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      out[(t * bins + k) * 2] = re(t, k);
      out[(t * bins + k) * 2 + 1] = im(t, k);
    }
  }
  return out;
}

std::vector<Real> StftEngine::synthesize(const Real* spec, std::int64_t frames,
                                         std::int64_t length) const {
  const int n = config_.window_size;
  const int bins = config_.bins();
  const int hop = config_.hop;
  Mat re(frames, bins), im(frames, bins);
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      re(t, k) = spec[(t * bins + k) * 2];
      im(t, k) = spec[(t * bins + k) * 2 + 1];
    }
  }
  Mat time = re * tables_->synthesis_cos - im * tables_->synthesis_sin;
  const std::int64_t span = n + hop * (frames - 1);
  std::vector<Real> ola(static_cast<std::size_t>(span), 0.0);
  std::vector<Real> envelope(static_cast<std::size_t>(span), 0.0);
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) {
      const Real w = tables_->window[static_cast<std::size_t>(i)];
      const auto pos = static_cast<std::size_t>(t * hop + i);
      ola[pos] += w * time(t, i);
      envelope[pos] += w * w;
    }
  }
  std::vector<Real> out(static_cast<std::size_t>(length), 0.0);
  const std::int64_t half = n / 2;
  for (std::int64_t i = 0; i < length; ++i) {
    const std::int64_t pos = i + half;
    if (pos >= span) break;
    const Real env = envelope[static_cast<std::size_t>(pos)];
    if (env > kEnvelopeFloor) {
      out[static_cast<std::size_t>(i)] = ola[static_cast<std::size_t>(pos)] / env;
    }
  }
  return out;
}

void StftEngine::synthesize_adjoint(std::span<const Real> grad,
                                    std::int64_t frames,
                                    Real* grad_spec) const {
  const int n = config_.window_size;
  const int bins = config_.bins();
  const int hop = config_.hop;
  const std::int64_t span = n + hop * (frames - 1);
  const std::int64_t half = n / 2;
  std::vector<Real> envelope(static_cast<std::size_t>(span), 0.0);
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) {
      const Real w = tables_->window[static_cast<std::size_t>(i)];
      envelope[static_cast<std::size_t>(t * hop + i)] += w * w;
    }
  }
  std::vector<Real> grad_ola(static_cast<std::size_t>(span), 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const auto pos = static_cast<std::int64_t>(i) + half;
    if (pos >= span) break;
    const Real env = envelope[static_cast<std::size_t>(pos)];
    if (env > kEnvelopeFloor) grad_ola[static_cast<std::size_t>(pos)] = grad[i] / env;
  }
  Mat grad_time(frames, n);
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) {
      grad_time(t, i) = tables_->window[static_cast<std::size_t>(i)] *
                        grad_ola[static_cast<std::size_t>(t * hop + i)];
    }
  }
  Mat grad_re = grad_time * tables_->synthesis_cos.transpose();
  Mat grad_im = -(grad_time * tables_->synthesis_sin.transpose());
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      grad_spec[(t * bins + k) * 2] += grad_re(t, k);
      grad_spec[(t * bins + k) * 2 + 1] += grad_im(t, k);
    }
  }
}

Tensor planes_to_channel_last(const Tensor& planes) {
  if (planes.rank() != 3 || planes.dim(0) != 2) {
    throw ShapeError("expected [2, T, F] planes, got " +
                     shape_string(planes.shape()));
  }
  const std::int64_t frames = planes.dim(1), bins = planes.dim(2);
  Tensor out({frames, bins, 2});
  for (std::int64_t i = 0; i < frames * bins; ++i) {
    out[2 * i] = planes[i];
    out[2 * i + 1] = planes[frames * bins + i];
  }
  return out;
}

Tensor channel_last_to_planes(const Tensor& tf2) {
  if (tf2.rank() != 3 || tf2.dim(2) != 2) {
    throw ShapeError("expected [T, F, 2], got " + shape_string(tf2.shape()));
  }
  const std::int64_t frames = tf2.dim(0), bins = tf2.dim(1);
  Tensor out({2, frames, bins});
  for (std::int64_t i = 0; i < frames * bins; ++i) {
    out[i] = tf2[2 * i];
    out[frames * bins + i] = tf2[2 * i + 1];
  }
  return out;
}

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& config) {
  if (wave.samples.empty()) throw ShapeError("stft: empty waveform");
  StftEngine engine(config);
  return {channel_last_to_planes(engine.analyze(wave.samples))};
}

Waveform istft(const ComplexSpectrogram& spec, const StftConfig& config,
               std::int64_t target_length, int sample_rate) {
  StftEngine engine(config);
  if (spec.planes.rank() != 3 || spec.planes.dim(0) != 2 ||
      spec.planes.dim(2) != config.bins()) {
    throw ShapeError("istft: spectrogram " + shape_string(spec.planes.shape()) +
                     " does not match " + std::to_string(config.bins()) +
                     " bins");
  }
  if (target_length < 0) throw ShapeError("istft: negative target length");
  const Tensor tf2 = planes_to_channel_last(spec.planes);
  Waveform out;
  out.sample_rate = sample_rate;
  out.samples = engine.synthesize(tf2.data(), spec.frames(), target_length);
  return out;
}

}  // namespace scalesep
