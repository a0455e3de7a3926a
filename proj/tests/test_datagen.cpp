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

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <set>

#include "helpers.hpp"
#include "scalesep/datagen.hpp"
#include "scalesep/errors.hpp"
#include "scalesep/objectives.hpp"

namespace scalesep {
namespace {

Real rms(const std::vector<Real>& x) {
  Real e = 0;
  for (Real v : x) e += v * v;
  return std::sqrt(e / static_cast<Real>(x.size()));
}

TEST(SynthSource, DeterministicAndSized) {
  for (auto kind : {SourceKind::kHarmonicVoice, SourceKind::kChirp, SourceKind::kFilteredNoise}) {
    SourceSpec s;
    s.kind = kind;
    s.seed = 77;
    const Waveform a = synth_source(s), b = synth_source(s);
    EXPECT_EQ(a.length(), 8000);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NEAR(rms(a.samples), 1, 1e-9);
    s.seed = 78;
    EXPECT_NE(synth_source(s).samples, a.samples);
  }
}

TEST(SynthSource, InvalidSpecs) {
  SourceSpec s;
  s.duration = 0;
  EXPECT_THROW(synth_source(s), ConfigError);
  s = SourceSpec{};
  s.f0_min = 300;
  s.f0_max = 200;
  EXPECT_THROW(synth_source(s), ConfigError);
  s = SourceSpec{};
  s.f0_max = 5000;
  EXPECT_THROW(synth_source(s), ConfigError);
  EXPECT_THROW(parse_source_kind("speech"), ConfigError);
}

TEST(SynthSource, FixedPitchHasHarmonicPeaks) {
  SourceSpec s;
  s.f0_min = s.f0_max = 200;
  s.am_depth = 0;
  s.silences = false;
  s.seed = 5;
  const Waveform w = synth_source(s);
  const std::int64_t n = w.length();
  // Hann-windowed DFT with 1 Hz bins.
  std::vector<Real> mag(static_cast<std::size_t>(n / 2));
  for (std::int64_t k = 0; k < n / 2; ++k) {
    std::complex<Real> acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const Real win = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<Real>(i) / n);
      acc += win * w.samples[static_cast<std::size_t>(i)] *
             std::polar<Real>(1, -2 * std::numbers::pi * static_cast<Real>(k * i % n) / n);
    }
    mag[static_cast<std::size_t>(k)] = std::abs(acc);
  }
  const Real peak = *std::max_element(mag.begin(), mag.end());
  int found = 0;
  for (std::size_t k = 1; k + 1 < mag.size(); ++k) {
    if (mag[k] > 0.01 * peak && mag[k] >= mag[k - 1] && mag[k] >= mag[k + 1]) {
      const Real nearest = 200 * std::round(static_cast<Real>(k) / 200);
      EXPECT_LE(std::abs(static_cast<Real>(k) - nearest), 2) << "peak at " << k << " Hz";
      EXPECT_GE(nearest, 200);
      ++found;
    }
  }
  EXPECT_GE(found, 5);
  for (int h = 1; h <= 3; ++h) EXPECT_GT(mag[static_cast<std::size_t>(200 * h)], 0.01 * peak);
}

TEST(SynthMixture, ExactSumWithoutNoise) {
  const MixtureExample ex = synth_mixture(3, 2, 0.5, -2.5, 2.5, false);
  ASSERT_EQ(ex.sources.size(), 2u);
  EXPECT_EQ(ex.mixture.length(), 4000);
  EXPECT_TRUE(ex.noise.samples.empty());
  for (std::int64_t i = 0; i < 4000; ++i) {
    const auto k = static_cast<std::size_t>(i);
    EXPECT_EQ(ex.mixture.samples[k] - (ex.sources[0].samples[k] + ex.sources[1].samples[k]), 0);
  }
  const Tensor refs = ex.source_tensor();
  EXPECT_EQ(refs.shape(), (Shape{2, 4000}));
}

TEST(SynthMixture, ZeroOffsetsGiveEqualRms) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const MixtureExample ex = synth_mixture(seed, 2, 0.5, 0, 0, false);
    EXPECT_NEAR(rms(ex.sources[0].samples), rms(ex.sources[1].samples), 1e-12);
  }
}

TEST(SynthMixture, NoiseEnergyBookkeeping) {
  MixtureParams p;
  p.noise_on = true;
  p.noise_snr_db = 20;
  for (std::uint64_t seed : {4u, 5u}) {
    const MixtureExample ex = synth_mixture(seed, p);
    Real clean = 0, noise = 0;
    for (std::size_t i = 0; i < ex.mixture.samples.size(); ++i) {
      const Real c = ex.sources[0].samples[i] + ex.sources[1].samples[i];
      clean += c * c;
      noise += ex.noise.samples[i] * ex.noise.samples[i];
      EXPECT_NEAR(ex.mixture.samples[i], c + ex.noise.samples[i], 1e-15);
    }
    EXPECT_NEAR(noise / clean, 1e-2, 1e-4);
  }
}

TEST(SynthMixture, SeparableBandsAndKinds) {
  MixtureParams p;
  p.speakers = 3;
  Real prev_high = 0;
  for (int j = 0; j < 3; ++j) {
    const auto [lo, hi] = f0_band(p, j);
    EXPECT_GE(lo, p.f0_low);
    EXPECT_LE(hi, p.f0_high);
    EXPECT_LT(lo, hi);
    EXPECT_GT(lo, prev_high);
    prev_high = hi;
  }
  for (auto kind : {SourceKind::kChirp, SourceKind::kFilteredNoise}) {
    p.kind = kind;
    EXPECT_EQ(synth_mixture(9, p).sources.size(), 3u);
  }
  p = MixtureParams{};
  p.speakers = 0;
  EXPECT_THROW(synth_mixture(1, p), ConfigError);
  p = MixtureParams{};
  p.snr_low = 3;
  p.snr_high = 1;
  EXPECT_THROW(synth_mixture(1, p), ConfigError);
}

TEST(SynthMixture, IdealRatioMaskSeparates) {
  // Oracle magnitude-ratio masks on the mixture STFT: the corpus should be
  // separable well beyond what the learning tests demand.
  StftConfig c;
  c.window_size = 256;
  c.hop = 128;
  Real total = 0;
  const int count = 5;
  for (int seed = 0; seed < count; ++seed) {
    const MixtureExample ex = synth_mixture(static_cast<std::uint64_t>(seed), MixtureParams{});
    const auto mix = stft(ex.mixture, c);
    std::vector<ComplexSpectrogram> srcs;
    for (const auto& s : ex.sources) srcs.push_back(stft(s, c));
    const std::int64_t tf = mix.frames() * mix.bins();
    for (std::size_t j = 0; j < 2; ++j) {
      ComplexSpectrogram est{mix.planes};
      for (std::int64_t i = 0; i < tf; ++i) {
        Real mags[2];
        for (std::size_t k = 0; k < 2; ++k) {
          mags[k] = std::hypot(srcs[k].planes[i], srcs[k].planes[tf + i]);
        }
        const Real m = mags[j] / (mags[0] + mags[1] + 1e-12);
        est.planes[i] *= m;
        est.planes[tf + i] *= m;
      }
      const Waveform y = istft(est, c, ex.mixture.length());
      total += si_snr_improvement(y, ex.sources[j], ex.mixture);
    }
  }
  EXPECT_GT(total / (2 * count), 10);
}

TEST(Manifest, SeedsUniqueAndDisjoint) {
  const Manifest m = build_dataset({200, 50, 50}, MixtureParams{});
  ASSERT_EQ(m.entries.size(), 300u);
  std::set<std::uint64_t> seeds;
  for (const auto& e : m.entries) seeds.insert(e.seed);
  EXPECT_EQ(seeds.size(), 300u);
  EXPECT_EQ(m.split(Split::kTrain).size(), 200u);
  EXPECT_EQ(m.split(Split::kVal).size(), 50u);
  EXPECT_EQ(m.split(Split::kTest).size(), 50u);
  std::set<std::uint64_t> train;
  for (const auto& e : m.split(Split::kTrain)) train.insert(e.seed);
  for (const auto& e : m.split(Split::kVal)) EXPECT_EQ(train.count(e.seed), 0u);
  EXPECT_NO_THROW(m.validate());
}

TEST(Manifest, RegenerationIsStable) {
  const Manifest m = build_dataset({30, 5, 5}, MixtureParams{});
  const auto& entry = m.entries[17];
  const MixtureExample a = m.load(entry), b = m.load(entry);
  EXPECT_EQ(a.mixture.samples, b.mixture.samples);
  EXPECT_EQ(a.sources[1].samples, b.sources[1].samples);
}

TEST(Manifest, OverlappingSeedRangesRejected) {
  SeedBases bases;
  bases.train = 0;
  bases.val = 100;
  EXPECT_THROW(build_dataset({200, 50, 50}, MixtureParams{}, bases), ConfigError);
  EXPECT_THROW(build_dataset({0, 5, 5}, MixtureParams{}), ConfigError);
  Manifest m = build_dataset({3, 2, 2}, MixtureParams{});
  m.entries[4].seed = m.entries[0].seed;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Manifest, WriteReadRoundTrip) {
  const std::string dir = testing::scratch_dir("manifest");
  MixtureParams p;
  p.duration = 0.25;
  p.noise_on = true;
  p.noise_snr_db = 15;
  const Manifest m = build_dataset({4, 2, 2}, p);
  m.write(dir + "/manifest.tsv");
  const Manifest r = Manifest::read(dir + "/manifest.tsv");
  ASSERT_EQ(r.entries.size(), m.entries.size());
  EXPECT_EQ(r.params.duration, 0.25);
  EXPECT_TRUE(r.params.noise_on);
  EXPECT_EQ(r.params.noise_snr_db, 15);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(r.entries[i].seed, m.entries[i].seed);
    EXPECT_EQ(r.entries[i].split, m.entries[i].split);
  }
  EXPECT_EQ(r.load(r.entries[3]).mixture.samples, m.load(m.entries[3]).mixture.samples);
  EXPECT_THROW(Manifest::read(dir + "/missing.tsv"), IoError);
}

TEST(Manifest, PersistedAudioMatchesRegeneration) {
  const std::string dir = testing::scratch_dir("persist");
  MixtureParams p;
  p.duration = 0.25;
  const Manifest m = build_dataset({2, 1, 1}, p, SeedBases{}, dir);
  m.write(dir + "/manifest.tsv");
  const Manifest r = Manifest::read(dir + "/manifest.tsv");
  for (const auto& e : r.entries) {
    ASSERT_NE(e.path, "-");
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(dir) / (e.path + ".mix.wav")));
    const MixtureExample disk = r.load(e);
    ManifestEntry seeded = e;
    seeded.path = "-";
    const MixtureExample fresh = r.load(seeded);
    ASSERT_EQ(disk.mixture.length(), fresh.mixture.length());
    for (std::size_t i = 0; i < disk.mixture.samples.size(); ++i) {
      EXPECT_NEAR(disk.mixture.samples[i], fresh.mixture.samples[i], 1e-6);
    }
  }
}

}  // namespace
}  // namespace scalesep
