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

#include "scalesep/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scalesep/errors.hpp"
#include "scalesep/ops.hpp"

namespace scalesep {
namespace {

constexpr Real kRatioFloor = 1e-30;
const Real kDbPerNeper = 10 / std::log(10.0);

// SI-SNR of one pair; when `grad` is non-null adds scale * dvalue/dest.
Real si_snr_raw(const Real* e, const Real* r, std::int64_t n, bool zero_mean,
                Real* grad, Real scale) {
  if (n < 1) throw ShapeError("si_snr: empty signals");
  Real me = 0, mr = 0;
  if (zero_mean) {
    for (std::int64_t i = 0; i < n; ++i) {
      me += e[i];
      mr += r[i];
    }
    me /= static_cast<Real>(n);
    mr /= static_cast<Real>(n);
  }
  Real ref_energy = 0, raw_energy = 0, dot = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const Real rc = r[i] - mr;
    ref_energy += rc * rc;
    raw_energy += r[i] * r[i];
    dot += (e[i] - me) * rc;
  }
  if (!(ref_energy > 1e-24 * raw_energy) || ref_energy <= 0) {
    throw Error("undefined reference: zero-energy reference signal");
  }
  const Real alpha = dot / (ref_energy + kMetricEps);
  const Real target = alpha * alpha * ref_energy;
  Real noise = 0, noise_dot_ref = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const Real rc = r[i] - mr;
    const Real resid = (e[i] - me) - alpha * rc;
    noise += resid * resid;
    noise_dot_ref += resid * rc;
  }
  const Real ratio = target / (noise + kMetricEps);
  if (!(ratio > kRatioFloor)) return kDbPerNeper * std::log(kRatioFloor);
  if (grad != nullptr) {
    // d target / de = 2 alpha R / (R + eps) * r~
    // d noise  / de = 2 n~ - 2 <n~, r~> / (R + eps) * r~
    const Real denom = ref_energy + kMetricEps;
    const Real c_ref = 2 * alpha * ref_energy / denom / target +
                       2 * noise_dot_ref / denom / (noise + kMetricEps);
    const Real c_res = -2 / (noise + kMetricEps);
    Real mean_g = 0;
    std::vector<Real> g(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      const Real rc = r[i] - mr;
      const Real resid = (e[i] - me) - alpha * rc;
      g[static_cast<std::size_t>(i)] = kDbPerNeper * (c_ref * rc + c_res * resid);
      mean_g += g[static_cast<std::size_t>(i)];
    }
    mean_g = zero_mean ? mean_g / static_cast<Real>(n) : 0;
    for (std::int64_t i = 0; i < n; ++i) {
      grad[i] += scale * (g[static_cast<std::size_t>(i)] - mean_g);
    }
  }
  return kDbPerNeper * std::log(ratio);
}

void check_pair(const Waveform& a, const Waveform& b, const char* what) {
  if (a.length() != b.length()) {
    throw ShapeError(std::string(what) + ": length mismatch " +
                     std::to_string(a.length()) + " vs " +
                     std::to_string(b.length()));
  }
}

Tensor stack_waves(const std::vector<Waveform>& waves) {
  if (waves.empty()) throw ShapeError("no waveforms to stack");
  const std::int64_t length = waves.front().length();
  Tensor out({static_cast<std::int64_t>(waves.size()), length});
  for (std::size_t j = 0; j < waves.size(); ++j) {
    if (waves[j].length() != length) throw ShapeError("ragged waveform set");
    std::copy(waves[j].samples.begin(), waves[j].samples.end(),
              out.data() + static_cast<std::int64_t>(j) * length);
  }
  return out;
}

struct TermResult {
  Var value;
  std::vector<std::vector<int>> perms;
};

TermResult average_term(const std::vector<Var>& estimates, const Tensor& refs,
                        const std::vector<int>* anchored) {
  TermResult out;
  Var sum;
  for (const auto& est : estimates) {
    std::vector<int> perm =
        anchored != nullptr ? *anchored : pit_assign(est.value(), refs).perm;
    Var term = neg_pit_si_snr(est, refs, perm);
    sum = sum.defined() ? add(sum, term) : term;
    out.perms.push_back(std::move(perm));
  }
  out.value = estimates.size() == 1
                  ? sum
                  : scale(sum, 1 / static_cast<Real>(estimates.size()));
  return out;
}

}  // namespace

Real si_snr(std::span<const Real> est, std::span<const Real> ref,
            bool zero_mean) {
  if (est.size() != ref.size()) throw ShapeError("si_snr: length mismatch");
  return si_snr_raw(est.data(), ref.data(), static_cast<std::int64_t>(est.size()),
                    zero_mean, nullptr, 0);
}

Real si_snr(const Waveform& est, const Waveform& ref, bool zero_mean) {
  check_pair(est, ref, "si_snr");
  return si_snr(std::span<const Real>(est.samples),
                std::span<const Real>(ref.samples), zero_mean);
}

Real sdr(const Waveform& est, const Waveform& ref) {
  check_pair(est, ref, "sdr");
  Real ref_energy = 0, err = 0;
  for (std::size_t i = 0; i < ref.samples.size(); ++i) {
    ref_energy += ref.samples[i] * ref.samples[i];
    const Real d = est.samples[i] - ref.samples[i];
    err += d * d;
  }
  if (!(ref_energy > 0)) {
    throw Error("undefined reference: zero-energy reference signal");
  }
  return 10 * std::log10(ref_energy / (err + kMetricEps));
}

Real si_snr_improvement(const Waveform& est, const Waveform& ref,
                        const Waveform& mixture) {
  return si_snr(est, ref) - si_snr(mixture, ref);
}

Real sdr_improvement(const Waveform& est, const Waveform& ref,
                     const Waveform& mixture) {
  return sdr(est, ref) - sdr(mixture, ref);
}

PitResult pit_assign(const Tensor& est, const Tensor& ref) {
  if (est.rank() != 2 || est.shape() != ref.shape()) {
    throw ShapeError("pit_assign: estimates " + shape_string(est.shape()) +
                     " vs references " + shape_string(ref.shape()));
  }
  const int count = static_cast<int>(est.dim(0));
  const std::int64_t length = est.dim(1);
  if (count < 1) throw ShapeError("pit_assign: need at least one source");
  if (count > kMaxPitSpeakers) {
    throw ConfigError("pit_assign: J = " + std::to_string(count) +
                      " exceeds the supported maximum of " +
                      std::to_string(kMaxPitSpeakers));
  }
  std::vector<Real> scores(static_cast<std::size_t>(count * count));
  for (int i = 0; i < count; ++i) {
    for (int k = 0; k < count; ++k) {
      scores[static_cast<std::size_t>(i * count + k)] =
          si_snr_raw(est.data() + i * length, ref.data() + k * length, length,
                     true, nullptr, 0);
    }
  }
  std::vector<int> perm(static_cast<std::size_t>(count));
  std::iota(perm.begin(), perm.end(), 0);
  PitResult best;
  bool first = true;
  do {
    Real total = 0;
    for (int i = 0; i < count; ++i) {
      total += scores[static_cast<std::size_t>(i * count + perm[static_cast<std::size_t>(i)])];
    }
    const Real mean = total / count;
    if (first || mean > best.mean_si_snr) {
      best.mean_si_snr = mean;
      best.perm = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

PitResult pit_assign(const std::vector<Waveform>& est,
                     const std::vector<Waveform>& ref) {
  if (est.size() != ref.size()) {
    throw ShapeError("pit_assign: " + std::to_string(est.size()) +
                     " estimates vs " + std::to_string(ref.size()) + " references");
  }
  if (est.empty()) throw ShapeError("pit_assign: need at least one source");
  return pit_assign(stack_waves(est), stack_waves(ref));
}

Var neg_pit_si_snr(const Var& est, const Tensor& refs,
                   const std::vector<int>& perm) {
  const Tensor& e = est.value();
  if (e.rank() != 2 || e.shape() != refs.shape()) {
    throw ShapeError("neg_pit_si_snr: estimates " + shape_string(e.shape()) +
                     " vs references " + shape_string(refs.shape()));
  }
  const std::int64_t count = e.dim(0), length = e.dim(1);
  if (static_cast<std::int64_t>(perm.size()) != count) {
    throw ShapeError("neg_pit_si_snr: permutation size mismatch");
  }
  Real total = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    total += si_snr_raw(e.data() + i * length,
                        refs.data() + perm[static_cast<std::size_t>(i)] * length,
                        length, true, nullptr, 0);
  }
  Tensor out({1}, -total / static_cast<Real>(count));
  return make_result(std::move(out), {est}, [est, refs, perm](Node& self) {
    const Tensor& ev = est.value();
    const std::int64_t j = ev.dim(0), len = ev.dim(1);
    Tensor& g = est.node()->grad_buffer();
    const Real upstream = self.grad[0] * (-1 / static_cast<Real>(j));
    for (std::int64_t i = 0; i < j; ++i) {
      si_snr_raw(ev.data() + i * len,
                 refs.data() + perm[static_cast<std::size_t>(i)] * len, len, true,
                 g.data() + i * len, upstream);
    }
  });
}

std::string to_string(LossTerm term) {
  switch (term) {
    case LossTerm::kLast: return "last";
    case LossTerm::kSep: return "sep";
    case LossTerm::kSplit: return "split";
    case LossTerm::kRe: return "re";
  }
  return "last";
}

LossTerm parse_loss_term(const std::string& name) {
  if (name == "last") return LossTerm::kLast;
  if (name == "sep") return LossTerm::kSep;
  if (name == "split") return LossTerm::kSplit;
  if (name == "re") return LossTerm::kRe;
  throw ConfigError("unknown loss term '" + name + "'");
}

std::string to_string(PitMode mode) {
  return mode == PitMode::kFinalAnchored ? "final_anchored" : "per_term";
}

PitMode parse_pit_mode(const std::string& name) {
  if (name == "per_term") return PitMode::kPerTerm;
  if (name == "final_anchored") return PitMode::kFinalAnchored;
  throw ConfigError("unknown pit_mode '" + name + "'");
}

void LossConfig::validate() const {
  if (!active(LossTerm::kLast)) throw ConfigError("loss term 'last' must be activated");
  for (Real w : {weight_last, weight_sep, weight_split, weight_re}) {
    if (!std::isfinite(w) || w < 0) {
      throw ConfigError("loss weights must be finite and nonnegative");
    }
  }
}

Real LossConfig::weight(LossTerm t) const {
  switch (t) {
    case LossTerm::kLast: return weight_last;
    case LossTerm::kSep: return weight_sep;
    case LossTerm::kSplit: return weight_split;
    case LossTerm::kRe: return weight_re;
  }
  return 0;
}

SupervisionRequest LossConfig::request() const {
  return {active(LossTerm::kSep), active(LossTerm::kSplit), active(LossTerm::kRe)};
}

LossConfig LossConfig::from_label(const std::string& label) {
  std::string key = label;
  if (!key.empty() && key[0] == 'l') key.erase(0, 1);
  const std::string times = "\xC3\x97";  // U+00D7
  for (auto pos = key.find(times); pos != std::string::npos; pos = key.find(times)) {
    key.replace(pos, times.size(), "x");
  }
  LossConfig cfg;
  if (key == "1") {
    cfg.activated = {LossTerm::kLast};
  } else if (key == "3") {
    cfg.activated = {LossTerm::kLast, LossTerm::kRe};
  } else if (key == "1+3") {
    cfg.activated = {LossTerm::kLast, LossTerm::kRe, LossTerm::kSplit};
  } else if (key == "1x2+3") {
    cfg.activated = {LossTerm::kLast, LossTerm::kRe, LossTerm::kSplit,
                     LossTerm::kSep};
  } else {
    throw ConfigError("unknown loss label '" + label +
                      "' (expected l1, l3, l1+3 or l1x2+3)");
  }
  return cfg;
}

std::string LossConfig::label() const {
  const bool sep = active(LossTerm::kSep), split = active(LossTerm::kSplit),
             re = active(LossTerm::kRe);
  if (!sep && !split && !re) return "l1";
  if (!sep && !split && re) return "l3";
  if (!sep && split && re) return "l1+3";
  if (sep && split && re) return "l1x2+3";
  std::string out = "custom:";
  for (auto t : activated) out += to_string(t) + ",";
  out.pop_back();
  return out;
}

Real combine_terms(const std::map<std::string, Real>& components,
                   const LossConfig& config) {
  if (components.empty()) throw Error("combine_terms: no components");
  Real sum = 0;
  for (const auto& [name, value] : components) {
    sum += config.weight(parse_loss_term(name)) * value;
  }
  return sum / static_cast<Real>(components.size());
}

GraphLoss trace_loss(const ForwardTrace& trace, const Tensor& refs,
                     const LossConfig& config) {
  config.validate();
  const Tensor& final_waves = trace.final.waves.value();
  if (refs.shape() != final_waves.shape()) {
    throw ShapeError("loss: references " + shape_string(refs.shape()) +
                     " vs estimates " + shape_string(final_waves.shape()));
  }
  GraphLoss out;
  std::vector<std::pair<LossTerm, Var>> terms;

  const std::vector<int> final_perm = pit_assign(final_waves, refs).perm;
  const std::vector<int>* anchor =
      config.pit_mode == PitMode::kFinalAnchored ? &final_perm : nullptr;
  {
    Var last = neg_pit_si_snr(trace.final.waves, refs, final_perm);
    terms.emplace_back(LossTerm::kLast, last);
    out.breakdown.permutations["last"] = {final_perm};
  }
  if (config.active(LossTerm::kSep) && trace.depths.n_sep > 1) {
    if (static_cast<int>(trace.sep_waves.size()) != trace.depths.n_sep - 1) {
      throw Error("loss term 'sep' is activated but Separator estimates are missing");
    }
    TermResult r = average_term(trace.sep_waves, refs, anchor);
    terms.emplace_back(LossTerm::kSep, r.value);
    out.breakdown.permutations["sep"] = std::move(r.perms);
  }
  if (config.active(LossTerm::kSplit)) {
    if (!trace.split_waves.defined()) {
      throw Error("loss term 'split' is activated but the Splitter estimate is missing");
    }
    TermResult r = average_term({trace.split_waves}, refs, anchor);
    terms.emplace_back(LossTerm::kSplit, r.value);
    out.breakdown.permutations["split"] = std::move(r.perms);
  }
  if (config.active(LossTerm::kRe) && trace.depths.n_re > 1) {
    if (static_cast<int>(trace.re_waves.size()) != trace.depths.n_re - 1) {
      throw Error("loss term 're' is activated but Reconstructor estimates are missing");
    }
    TermResult r = average_term(trace.re_waves, refs, anchor);
    terms.emplace_back(LossTerm::kRe, r.value);
    out.breakdown.permutations["re"] = std::move(r.perms);
  }

  Var sum;
  for (const auto& [term, value] : terms) {
    out.breakdown.components[to_string(term)] = value.value()[0];
    Var weighted = scale(value, config.weight(term));
    sum = sum.defined() ? add(sum, weighted) : weighted;
  }
  out.breakdown.K = static_cast<int>(terms.size());
  out.total = scale(sum, 1 / static_cast<Real>(terms.size()));
  out.breakdown.total = out.total.value()[0];
  return out;
}

LossBreakdown total_loss(const SeparationOutput& output,
                         const std::vector<Waveform>& refs,
                         const LossConfig& config) {
  NoGradGuard no_grad;
  ForwardTrace trace;
  trace.depths = output.applied_depths;
  trace.final.waves = constant(stack_waves(output.waves));
  const bool have_stages = !output.sep_estimates.empty();
  if ((config.active(LossTerm::kSep) || config.active(LossTerm::kSplit)) &&
      have_stages) {
    const auto& sep = output.sep_estimates;
    for (std::size_t i = 0; i + 1 < sep.size(); ++i) {
      trace.sep_waves.push_back(constant(stack_waves(sep[i])));
    }
    trace.split_waves = constant(stack_waves(sep.back()));
  }
  if (config.active(LossTerm::kRe)) {
    const auto& re = output.re_estimates;
    for (std::size_t i = 0; i + 1 < re.size(); ++i) {
      trace.re_waves.push_back(constant(stack_waves(re[i])));
    }
  }
  return trace_loss(trace, stack_waves(refs), config).breakdown;
}

}  // namespace scalesep
