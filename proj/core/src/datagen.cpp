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

#include "scalesep/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "scalesep/errors.hpp"
#include "scalesep/random.hpp"
#include "scalesep/wav.hpp"

namespace scalesep {
namespace {

constexpr Real kTwoPi = 2 * std::numbers::pi;
constexpr Real kSourceRms = 0.1;
constexpr Real kBandFill = 0.7;  // fraction of each log-pitch slot in use
constexpr Real kOtherKindsShift = 4;

void normalize_rms(std::vector<Real>& x, Real target) {
  Real energy = 0;
  for (Real v : x) energy += v * v;
  if (!(energy > 0)) throw Error("synthesized source has zero energy");
  const Real g = target / std::sqrt(energy / static_cast<Real>(x.size()));
  for (Real& v : x) v *= g;
}

// Syllabic envelope: sin^2 bumps, some syllables pulled down to silence.
std::vector<Real> syllable_envelope(const SourceSpec& spec, Rng& rng,
                                    std::int64_t n) {
  std::vector<Real> env(static_cast<std::size_t>(n), 1.0);
  if (spec.am_depth <= 0) return env;
  const Real offset = rng.uniform();
  const auto syllables =
      static_cast<std::int64_t>(spec.duration * spec.am_rate + offset) + 2;
  std::vector<bool> muted(static_cast<std::size_t>(syllables), false);
  if (spec.silences) {
    for (std::int64_t s = 1; s < syllables; ++s) {
      muted[static_cast<std::size_t>(s)] = rng.uniform() < 0.25;
    }
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const Real pos = spec.am_rate * static_cast<Real>(i) / spec.sample_rate + offset;
    const Real bump = std::sin(std::numbers::pi * pos);
    const Real b2 = bump * bump;
    const auto s = static_cast<std::size_t>(pos);
    env[static_cast<std::size_t>(i)] =
        muted[s] ? (1 - spec.am_depth) * (1 - b2)
                 : (1 - spec.am_depth) + spec.am_depth * b2;
  }
  return env;
}

Real formant_gain(Real f, Real f1, Real f2) {
  const Real tilt = 1 / (1 + f / 500);
  const Real a = (f - f1) / 150, b = (f - f2) / 250;
  return tilt * (0.3 + std::exp(-a * a) + 0.7 * std::exp(-b * b));
}

std::vector<Real> harmonic_voice(const SourceSpec& spec, Rng& rng, std::int64_t n) {
  const Real sr = spec.sample_rate;
  const Real lo = std::log(spec.f0_min), hi = std::log(spec.f0_max);
  // f0 trajectory: reflected random walk in log pitch at 10 ms knots.
  const std::int64_t step = std::max<std::int64_t>(1, static_cast<std::int64_t>(sr / 100));
  const std::int64_t knots = n / step + 2;
  std::vector<Real> log_f0(static_cast<std::size_t>(knots));
  Real cur = rng.uniform(lo, hi);
  for (auto& v : log_f0) {
    v = cur;
    if (hi > lo) {
      cur += 0.03 * rng.normal();
      if (cur > hi) cur = 2 * hi - cur;
      if (cur < lo) cur = 2 * lo - cur;
      cur = std::clamp(cur, lo, hi);
    }
  }
  const Real f1 = rng.uniform(300, 900), f2 = rng.uniform(1000, 2500);
  const int max_harmonics = static_cast<int>(0.5 * sr / spec.f0_min) + 1;
  std::vector<Real> phase0(static_cast<std::size_t>(max_harmonics));
  for (auto& p : phase0) p = rng.uniform(0, kTwoPi);

  const Real nyquist_edge = 0.45 * sr, fade = 0.05 * sr;
  std::vector<Real> out(static_cast<std::size_t>(n), 0.0);
  Real phase = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t k0 = i / step;
    const Real frac = static_cast<Real>(i % step) / static_cast<Real>(step);
    const Real f0 = std::exp((1 - frac) * log_f0[static_cast<std::size_t>(k0)] +
                             frac * log_f0[static_cast<std::size_t>(k0 + 1)]);
    Real acc = 0;
    for (int h = 1; h <= max_harmonics; ++h) {
      const Real f = h * f0;
      if (f >= nyquist_edge) break;
      const Real edge = std::min<Real>(1, (nyquist_edge - f) / fade);
      acc += edge * formant_gain(f, f1, f2) *
             std::sin(h * phase + phase0[static_cast<std::size_t>(h - 1)]);
    }
    out[static_cast<std::size_t>(i)] = acc;
    phase = std::fmod(phase + kTwoPi * f0 / sr, kTwoPi);
  }
  return out;
}

std::vector<Real> chirp(const SourceSpec& spec, Rng& rng, std::int64_t n) {
  const Real sr = spec.sample_rate;
  const bool up = rng.uniform() < 0.5;
  const Real fa = up ? spec.f0_min : spec.f0_max, fb = up ? spec.f0_max : spec.f0_min;
  const Real phase0 = rng.uniform(0, kTwoPi);
  std::vector<Real> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const Real t = static_cast<Real>(i) / sr;
    out[static_cast<std::size_t>(i)] =
        std::sin(phase0 + kTwoPi * (fa * t + (fb - fa) * t * t / (2 * spec.duration)));
  }
  return out;
}

std::vector<Real> filtered_noise(const SourceSpec& spec, Rng& rng, std::int64_t n) {
  // RBJ constant-peak band-pass biquad.
  const Real sr = spec.sample_rate;
  const Real center = std::sqrt(spec.f0_min * spec.f0_max);
  const Real width = std::max<Real>(spec.f0_max - spec.f0_min, 1);
  const Real w0 = kTwoPi * center / sr;
  const Real alpha = std::sin(w0) * width / (2 * center);
  const Real a0 = 1 + alpha;
  const Real b0 = alpha / a0, b2 = -alpha / a0;
  const Real a1 = -2 * std::cos(w0) / a0, a2 = (1 - alpha) / a0;
  std::vector<Real> out(static_cast<std::size_t>(n));
  Real x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (auto& y : out) {
    const Real x = rng.normal();
    y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string entry_prefix(const std::string& dir, Split split, std::uint64_t seed) {
  return (std::filesystem::path(dir) / (to_string(split) + "_" + std::to_string(seed)))
      .string();
}

}  // namespace

SourceKind parse_source_kind(const std::string& name) {
  if (name == "harmonic_voice") return SourceKind::kHarmonicVoice;
  if (name == "chirp") return SourceKind::kChirp;
  if (name == "filtered_noise") return SourceKind::kFilteredNoise;
  throw ConfigError("unknown source kind '" + name + "'");
}

std::string to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kHarmonicVoice: return "harmonic_voice";
    case SourceKind::kChirp: return "chirp";
    case SourceKind::kFilteredNoise: return "filtered_noise";
  }
  return "harmonic_voice";
}

void SourceSpec::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (!(duration > 0)) throw ConfigError("duration must be positive");
  if (!(f0_min > 0) || !(f0_max >= f0_min) || !(f0_max < 0.5 * sample_rate)) {
    throw ConfigError("f0 range must satisfy 0 < f0_min <= f0_max < sample_rate/2");
  }
  if (!(am_rate > 0)) throw ConfigError("am_rate must be positive");
  if (!(am_depth >= 0 && am_depth <= 1)) throw ConfigError("am_depth must be in [0, 1]");
  if (length() < 1) throw ConfigError("duration shorter than one sample");
}

std::int64_t SourceSpec::length() const {
  return static_cast<std::int64_t>(std::llround(duration * sample_rate));
}

Waveform synth_source(const SourceSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::int64_t n = spec.length();
  std::vector<Real> x;
  switch (spec.kind) {
    case SourceKind::kHarmonicVoice: x = harmonic_voice(spec, rng, n); break;
    case SourceKind::kChirp: x = chirp(spec, rng, n); break;
    case SourceKind::kFilteredNoise: x = filtered_noise(spec, rng, n); break;
  }
  const std::vector<Real> env = syllable_envelope(spec, rng, n);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= env[i];
  normalize_rms(x, 1.0);
  Waveform w;
  w.samples = std::move(x);
  w.sample_rate = spec.sample_rate;
  return w;
}

void MixtureParams::validate() const {
  if (speakers < 2) throw ConfigError("mixtures need at least 2 sources");
  if (!(duration > 0)) throw ConfigError("duration must be positive");
  if (!(snr_low <= snr_high) || !std::isfinite(snr_low) || !std::isfinite(snr_high)) {
    throw ConfigError("snr_range must be finite with low <= high");
  }
  if (!std::isfinite(noise_snr_db)) throw ConfigError("noise_snr_db must be finite");
  if (!(f0_low > 0) || !(f0_high > f0_low)) {
    throw ConfigError("f0 span must satisfy 0 < f0_low < f0_high");
  }
  const Real top = kind == SourceKind::kHarmonicVoice ? f0_high : kOtherKindsShift * f0_high;
  if (!(top < 0.5 * sample_rate)) throw ConfigError("f0 span exceeds Nyquist");
}

std::pair<Real, Real> f0_band(const MixtureParams& params, int j) {
  const Real lo = std::log(params.f0_low), hi = std::log(params.f0_high);
  const Real slot = (hi - lo) / params.speakers;
  const Real margin = slot * (1 - kBandFill) / 2;
  const Real a = lo + slot * j + margin, b = lo + slot * (j + 1) - margin;
  return {std::exp(a), std::exp(b)};
}

MixtureExample synth_mixture(std::uint64_t seed, const MixtureParams& params) {
  params.validate();
  MixtureExample ex;
  ex.seed = seed;
  Rng rng(mix_seed(seed, 1000));
  std::vector<Real> mix;
  for (int j = 0; j < params.speakers; ++j) {
    SourceSpec spec;
    spec.kind = params.kind;
    auto [lo, hi] = f0_band(params, j);
    if (params.kind != SourceKind::kHarmonicVoice) {
      lo *= kOtherKindsShift;
      hi *= kOtherKindsShift;
    }
    spec.f0_min = lo;
    spec.f0_max = hi;
    spec.duration = params.duration;
    spec.sample_rate = params.sample_rate;
    spec.seed = mix_seed(seed, static_cast<std::uint64_t>(j));
    Waveform s = synth_source(spec);
    const Real offset = rng.uniform(params.snr_low, params.snr_high);
    const Real gain = kSourceRms * std::pow(10.0, offset / 20);
    for (Real& v : s.samples) v *= gain;
    if (mix.empty()) mix.assign(s.samples.size(), 0.0);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += s.samples[i];
    ex.snr_offsets.push_back(offset);
    ex.sources.push_back(std::move(s));
  }
  ex.noise.sample_rate = params.sample_rate;
  if (params.noise_on) {
    Real clean = 0;
    for (Real v : mix) clean += v * v;
    std::vector<Real> noise(mix.size());
    Real raw = 0;
    for (Real& v : noise) {
      v = rng.normal();
      raw += v * v;
    }
    const Real g = std::sqrt(clean * std::pow(10.0, -params.noise_snr_db / 10) / raw);
    for (std::size_t i = 0; i < noise.size(); ++i) {
      noise[i] *= g;
      mix[i] += noise[i];
    }
    ex.noise.samples = std::move(noise);
  }
  ex.mixture.samples = std::move(mix);
  ex.mixture.sample_rate = params.sample_rate;
  return ex;
}

MixtureExample synth_mixture(std::uint64_t seed, int speakers, Real duration,
                             Real snr_low, Real snr_high, bool noise_on) {
  MixtureParams p;
  p.speakers = speakers;
  p.duration = duration;
  p.snr_low = snr_low;
  p.snr_high = snr_high;
  p.noise_on = noise_on;
  return synth_mixture(seed, p);
}

Tensor MixtureExample::source_tensor() const {
  if (sources.empty()) throw ShapeError("example has no sources");
  const std::int64_t len = sources.front().length();
  Tensor out({static_cast<std::int64_t>(sources.size()), len});
  for (std::size_t j = 0; j < sources.size(); ++j) {
    if (sources[j].length() != len) throw ShapeError("ragged sources");
    std::copy(sources[j].samples.begin(), sources[j].samples.end(),
              out.data() + static_cast<std::int64_t>(j) * len);
  }
  return out;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "'");
}

std::vector<ManifestEntry> Manifest::split(Split which) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == which) out.push_back(e);
  }
  return out;
}

MixtureExample Manifest::load(const ManifestEntry& entry) const {
  if (entry.path == "-") {
    MixtureParams p = params;
    p.duration = entry.duration;
    return synth_mixture(entry.seed, p);
  }
  std::filesystem::path prefix(entry.path);
  if (prefix.is_relative() && !base_dir.empty()) prefix = std::filesystem::path(base_dir) / prefix;
  MixtureExample ex;
  ex.seed = entry.seed;
  ex.mixture = read_wav(prefix.string() + ".mix.wav");
  for (int j = 0; j < params.speakers; ++j) {
    ex.sources.push_back(read_wav(prefix.string() + ".s" + std::to_string(j + 1) + ".wav"));
  }
  const std::string noise_path = prefix.string() + ".noise.wav";
  if (std::filesystem::exists(noise_path)) ex.noise = read_wav(noise_path);
  return ex;
}

void Manifest::validate() const {
  params.validate();
  std::set<std::uint64_t> all;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    std::set<std::uint64_t> seen;
    for (const auto& e : entries) {
      if (e.split != s) continue;
      if (!seen.insert(e.seed).second) {
        throw ConfigError("duplicate seed " + std::to_string(e.seed) + " in split " +
                          to_string(s));
      }
      if (!(e.duration > 0)) throw ConfigError("entry duration must be positive");
    }
    for (auto seed : seen) {
      if (!all.insert(seed).second) {
        throw ConfigError("seed " + std::to_string(seed) + " appears in two splits");
      }
    }
  }
}

void Manifest::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out.precision(17);
  out << "# scalesep manifest v1\n"
      << "# sample_rate=" << params.sample_rate << "\n"
      << "# speakers=" << params.speakers << "\n"
      << "# duration=" << params.duration << "\n"
      << "# snr_low=" << params.snr_low << "\n"
      << "# snr_high=" << params.snr_high << "\n"
      << "# noise_on=" << (params.noise_on ? 1 : 0) << "\n"
      << "# noise_snr_db=" << params.noise_snr_db << "\n"
      << "# kind=" << to_string(params.kind) << "\n"
      << "# f0_low=" << params.f0_low << "\n"
      << "# f0_high=" << params.f0_high << "\n";
  for (const auto& e : entries) {
    out << to_string(e.split) << '\t' << e.seed << '\t' << e.path << '\t'
        << e.duration << '\n';
  }
  if (!out) throw IoError("write failed for manifest '" + path + "'");
}

Manifest Manifest::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw IoError("manifest '" + path + "' line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
      try {
        if (key == "sample_rate") m.params.sample_rate = std::stoi(value);
        else if (key == "speakers") m.params.speakers = std::stoi(value);
        else if (key == "duration") m.params.duration = std::stod(value);
        else if (key == "snr_low") m.params.snr_low = std::stod(value);
        else if (key == "snr_high") m.params.snr_high = std::stod(value);
        else if (key == "noise_on") m.params.noise_on = value == "1" || value == "true";
        else if (key == "noise_snr_db") m.params.noise_snr_db = std::stod(value);
        else if (key == "kind") m.params.kind = parse_source_kind(value);
        else if (key == "f0_low") m.params.f0_low = std::stod(value);
        else if (key == "f0_high") m.params.f0_high = std::stod(value);
        else fail("unknown header key '" + key + "'");
      } catch (const std::invalid_argument&) {
        fail("bad value for '" + key + "'");
      } catch (const std::out_of_range&) {
        fail("bad value for '" + key + "'");
      }
      continue;
    }
    std::istringstream fields(line);
    std::string split, seed, entry_path, duration, extra;
    if (!std::getline(fields, split, '\t') || !std::getline(fields, seed, '\t') ||
        !std::getline(fields, entry_path, '\t') || !std::getline(fields, duration, '\t')) {
      fail("expected split<TAB>seed<TAB>path<TAB>duration");
    }
    if (std::getline(fields, extra, '\t')) fail("too many fields");
    ManifestEntry e;
    try {
      e.split = parse_split(trim(split));
      std::size_t used = 0;
      e.seed = std::stoull(trim(seed), &used);
      if (used != trim(seed).size()) fail("bad seed");
      e.path = trim(entry_path);
      e.duration = std::stod(trim(duration));
    } catch (const ConfigError& err) {
      fail(err.what());
    } catch (const std::invalid_argument&) {
      fail("bad numeric field");
    } catch (const std::out_of_range&) {
      fail("numeric field out of range");
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

Manifest build_dataset(const SplitCounts& counts, const MixtureParams& params,
                       const SeedBases& bases,
                       const std::optional<std::string>& persist_dir) {
  params.validate();
  struct Range {
    Split split;
    std::uint64_t base;
    int count;
  };
  const std::vector<Range> ranges = {{Split::kTrain, bases.train, counts.train},
                                     {Split::kVal, bases.val, counts.val},
                                     {Split::kTest, bases.test, counts.test}};
  for (const auto& r : ranges) {
    if (r.count < 1) throw ConfigError("split " + to_string(r.split) + " needs count >= 1");
  }
  for (std::size_t a = 0; a < ranges.size(); ++a) {
    for (std::size_t b = a + 1; b < ranges.size(); ++b) {
      const auto& x = ranges[a];
      const auto& y = ranges[b];
      if (x.base < y.base + static_cast<std::uint64_t>(y.count) &&
          y.base < x.base + static_cast<std::uint64_t>(x.count)) {
        throw ConfigError("overlapping seed ranges for splits " + to_string(x.split) +
                          " and " + to_string(y.split));
      }
    }
  }
  if (persist_dir) std::filesystem::create_directories(*persist_dir);
  Manifest m;
  m.params = params;
  for (const auto& r : ranges) {
    for (int i = 0; i < r.count; ++i) {
      ManifestEntry e;
      e.split = r.split;
      e.seed = r.base + static_cast<std::uint64_t>(i);
      e.duration = params.duration;
      if (persist_dir) {
        const std::string prefix = entry_prefix(*persist_dir, r.split, e.seed);
        const MixtureExample ex = synth_mixture(e.seed, params);
        write_wav(prefix + ".mix.wav", ex.mixture);
        for (std::size_t j = 0; j < ex.sources.size(); ++j) {
          write_wav(prefix + ".s" + std::to_string(j + 1) + ".wav", ex.sources[j]);
        }
        if (params.noise_on) write_wav(prefix + ".noise.wav", ex.noise);
        e.path = prefix;
      }
      m.entries.push_back(std::move(e));
    }
  }
  m.validate();
  return m;
}

}  // namespace scalesep
