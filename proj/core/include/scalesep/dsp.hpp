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

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scalesep/tensor.hpp"

namespace scalesep {

inline constexpr int kDefaultSampleRate = 8000;

struct Waveform {
  std::vector<Real> samples;
  int sample_rate = kDefaultSampleRate;

  std::int64_t length() const {
    return static_cast<std::int64_t>(samples.size());
  }
  // Throws ConfigError unless non-empty, finite and sample_rate > 0.
  void validate() const;
};

enum class WindowKind { kHann };

WindowKind parse_window_kind(const std::string& name);
std::string to_string(WindowKind kind);

struct StftConfig {
  int window_size = 128;
  int hop = 64;
  WindowKind window = WindowKind::kHann;

  void validate() const;
  int bins() const { return window_size / 2 + 1; }
  // Center-padded framing: floor(L / hop) + 1.
  std::int64_t frames(std::int64_t length) const { return length / hop + 1; }
};

// Planes [2, T, F]: plane 0 real, plane 1 imaginary.
struct ComplexSpectrogram {
  Tensor planes;

  std::int64_t frames() const { return planes.dim(1); }
  std::int64_t bins() const { return planes.dim(2); }
};

// Periodic analysis window of length window_size.
std::vector<Real> make_window(const StftConfig& config);

// Precomputed window and DFT tables for one StftConfig. Immutable and cheap
// to copy; safe to share across threads.
class StftEngine {
 public:
  explicit StftEngine(const StftConfig& config);

  const StftConfig& config() const { return config_; }

  // Spectrum of `x` laid out [T, F, 2] (re, im interleaved per bin).
  Tensor analyze(std::span<const Real> x) const;

  // Overlap-add synthesis of a [T, F, 2] spectrum, normalized by the
  // squared-window envelope, cut or zero-padded to `length`.
  std::vector<Real> synthesize(const Real* spec, std::int64_t frames,
                               std::int64_t length) const;

  // Adds the adjoint of synthesize() applied to `grad` into `grad_spec`
  // ([T, F, 2]).
  void synthesize_adjoint(std::span<const Real> grad, std::int64_t frames,
                          Real* grad_spec) const;

 private:
  struct Tables;
  StftConfig config_;
  std::shared_ptr<const Tables> tables_;
};

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& config);
Waveform istft(const ComplexSpectrogram& spec, const StftConfig& config,
               std::int64_t target_length, int sample_rate = kDefaultSampleRate);

// Layout helpers between [2, T, F] planes and channel-last [T, F, 2].
Tensor planes_to_channel_last(const Tensor& planes);
Tensor channel_last_to_planes(const Tensor& tf2);

}  // namespace scalesep
