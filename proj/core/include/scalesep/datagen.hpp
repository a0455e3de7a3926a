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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scalesep/dsp.hpp"

namespace scalesep {

enum class SourceKind { kHarmonicVoice, kChirp, kFilteredNoise };

SourceKind parse_source_kind(const std::string& name);
std::string to_string(SourceKind kind);

struct SourceSpec {
  SourceKind kind = SourceKind::kHarmonicVoice;
  Real f0_min = 100;         // Hz; equal bounds pin f0 for harmonic voices
  Real f0_max = 200;
  Real duration = 1.0;       // seconds
  Real am_rate = 4.0;        // syllables per second
  Real am_depth = 0.8;       // 0 disables amplitude modulation
  bool silences = true;      // short gaps between syllables
  std::uint64_t seed = 0;
  int sample_rate = kDefaultSampleRate;

  void validate() const;
  std::int64_t length() const;
};

Waveform synth_source(const SourceSpec& spec);

struct MixtureParams {
  int speakers = 2;
  Real duration = 0.5;
  Real snr_low = -2.5;       // per-source gain offsets, dB
  Real snr_high = 2.5;
  bool noise_on = false;
  Real noise_snr_db = 20;    // clean-mixture to noise energy ratio
  SourceKind kind = SourceKind::kHarmonicVoice;
  Real f0_low = 80;          // overall pitch span split into per-source bands
  Real f0_high = 400;
  int sample_rate = kDefaultSampleRate;

  void validate() const;
};

struct MixtureExample {
  Waveform mixture;
  std::vector<Waveform> sources;
  Waveform noise;                  // empty samples when noise is off
  std::vector<Real> snr_offsets;   // dB per source
  std::uint64_t seed = 0;

  Tensor source_tensor() const;    // [J, L]
};

MixtureExample synth_mixture(std::uint64_t seed, const MixtureParams& params);
MixtureExample synth_mixture(std::uint64_t seed, int speakers, Real duration,
                             Real snr_low, Real snr_high, bool noise_on);

// Source-specific f0 band j of `speakers` within [f0_low, f0_high], spaced
// geometrically with a gap between neighbours.
std::pair<Real, Real> f0_band(const MixtureParams& params, int j);

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split split);
Split parse_split(const std::string& name);

struct ManifestEntry {
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
  std::string path = "-";   // "-" means regenerate from the seed
  Real duration = 0;
};

struct SplitCounts {
  int train = 200;
  int val = 50;
  int test = 50;
};

struct SeedBases {
  std::uint64_t train = 1'000'000;
  std::uint64_t val = 2'000'000;
  std::uint64_t test = 3'000'000;
};

struct Manifest {
  MixtureParams params;
  std::vector<ManifestEntry> entries;
  std::string base_dir;     // relative entry paths resolve against this

  std::vector<ManifestEntry> split(Split which) const;
  MixtureExample load(const ManifestEntry& entry) const;
  // Seeds unique within a split and disjoint across splits.
  void validate() const;
  void write(const std::string& path) const;
  static Manifest read(const std::string& path);
};

// Seed-indexed corpus. With `persist_dir` every example is also written as
// float32 WAVs (<prefix>.mix.wav, <prefix>.s<j>.wav, <prefix>.noise.wav).
Manifest build_dataset(const SplitCounts& counts, const MixtureParams& params,
                       const SeedBases& bases = {},
                       const std::optional<std::string>& persist_dir = std::nullopt);

}  // namespace scalesep
