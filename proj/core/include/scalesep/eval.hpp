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
#include <functional>
#include <string>
#include <vector>

#include "scalesep/datagen.hpp"
#include "scalesep/model.hpp"

namespace scalesep {

// Produces J estimates for one mixture.
using Estimator = std::function<std::vector<Waveform>(const MixtureExample&)>;

struct UtteranceScore {
  std::uint64_t seed = 0;
  Real si_snri = 0;
  Real sdri = 0;
  std::vector<int> perm;  // estimate i matched to reference perm[i]
};

struct EvalResult {
  Real mean_si_snri = 0;
  Real median_si_snri = 0;
  Real mean_sdri = 0;
  std::vector<UtteranceScore> table;
  Depths depths;
  int count = 0;
};

// PIT-aligned SI-SNRi and SDRi per utterance, averaged.
EvalResult evaluate_with(const std::vector<MixtureExample>& examples,
                         const Estimator& estimator, Depths depths = {});
EvalResult evaluate(const ModelParams& params,
                    const std::vector<MixtureExample>& examples, int n_sep, int n_re);
EvalResult evaluate(const ModelParams& params, const Manifest& manifest, Split split,
                    int n_sep, int n_re);

// Wall-clock forward time over audio duration: one warmup run, then the
// median of `repeats` (>= 3) timed runs.
Real measure_rtf(const ModelParams& params, int n_sep, int n_re, Real duration,
                 int repeats);

struct SweepRow {
  int n_sep = 1;
  int n_re = 1;
  std::int64_t params = 0;
  Real si_snri_db = 0;
  Real sdri_db = 0;
  Real rtf = 0;
};

struct SweepReport {
  std::string model_label;
  std::string dataset_label;
  std::vector<SweepRow> rows;
};

struct RtfOptions {
  bool enabled = true;
  Real duration = 2.0;
  int repeats = 3;
};

// One evaluate per requested n_re, rows in request order.
SweepReport sweep(const ModelParams& params, const std::vector<MixtureExample>& examples,
                  const std::vector<int>& n_re_list, int n_sep,
                  const std::string& model_label, const std::string& dataset_label,
                  const RtfOptions& rtf = {});

enum class ReportFormat { kCsv, kText };
ReportFormat parse_report_format(const std::string& name);

// CSV header: model,n_sep,n_re,params,si_snri_db,sdri_db,rtf
std::string format_report(const SweepReport& report, ReportFormat format);
void emit_report(const SweepReport& report, const std::string& path, ReportFormat format);
SweepReport read_csv_report(const std::string& path);

}  // namespace scalesep
