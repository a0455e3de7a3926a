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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "scalesep/autograd.hpp"
#include "scalesep/dsp.hpp"
#include "scalesep/model.hpp"

namespace scalesep {

inline constexpr Real kMetricEps = 1e-8;

// 10 log10 of target over residual energy after projecting `est` on `ref`.
// Both signals are mean-removed unless zero_mean is false.
Real si_snr(std::span<const Real> est, std::span<const Real> ref,
            bool zero_mean = true);
Real si_snr(const Waveform& est, const Waveform& ref, bool zero_mean = true);

// Plain energy-ratio SDR, no projection filter.
Real sdr(const Waveform& est, const Waveform& ref);

Real si_snr_improvement(const Waveform& est, const Waveform& ref,
                        const Waveform& mixture);
Real sdr_improvement(const Waveform& est, const Waveform& ref,
                     const Waveform& mixture);

struct PitResult {
  Real mean_si_snr = 0;
  std::vector<int> perm;  // perm[i] = reference matched to estimate i
};

inline constexpr int kMaxPitSpeakers = 8;

// Exhaustive search over J! assignments. Ties keep the lexicographically
// smallest permutation.
PitResult pit_assign(const std::vector<Waveform>& est,
                     const std::vector<Waveform>& ref);
// Same, rows of [J, L] tensors.
PitResult pit_assign(const Tensor& est, const Tensor& ref);

enum class LossTerm { kLast, kSep, kSplit, kRe };
enum class PitMode { kPerTerm, kFinalAnchored };

std::string to_string(LossTerm term);
LossTerm parse_loss_term(const std::string& name);
std::string to_string(PitMode mode);
PitMode parse_pit_mode(const std::string& name);

struct LossConfig {
  std::set<LossTerm> activated{LossTerm::kLast};
  Real weight_last = 1;
  Real weight_sep = 1;
  Real weight_split = 1;
  Real weight_re = 1;
  PitMode pit_mode = PitMode::kPerTerm;

  void validate() const;
  bool active(LossTerm t) const { return activated.count(t) > 0; }
  Real weight(LossTerm t) const;
  SupervisionRequest request() const;

  // l1 / l3 / l1+3 / l1x2+3 (also spelled with the multiplication sign).
  static LossConfig from_label(const std::string& label);
  std::string label() const;
};

struct LossBreakdown {
  Real total = 0;
  std::map<std::string, Real> components;  // activated, non-vacuous terms
  int K = 0;
  // One assignment per estimate that entered a term.
  std::map<std::string, std::vector<std::vector<int>>> permutations;
};

// Differentiable objective over a forward trace. `refs` is [J, L].
struct GraphLoss {
  Var total;
  LossBreakdown breakdown;
};
GraphLoss trace_loss(const ForwardTrace& trace, const Tensor& refs,
                     const LossConfig& config);

// Value-only objective over a collected inference output.
LossBreakdown total_loss(const SeparationOutput& output,
                         const std::vector<Waveform>& refs,
                         const LossConfig& config);

// Negative mean SI-SNR of est rows [J, L] against refs under `perm`, with a
// hand-derived gradient with respect to est.
Var neg_pit_si_snr(const Var& est, const Tensor& refs, const std::vector<int>& perm);

// Recomputes the weighted average from per-term values.
Real combine_terms(const std::map<std::string, Real>& components,
                   const LossConfig& config);

}  // namespace scalesep
