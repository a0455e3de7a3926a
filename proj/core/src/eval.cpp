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

#include "scalesep/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scalesep/errors.hpp"
#include "scalesep/objectives.hpp"

namespace scalesep {
namespace {

constexpr const char* kCsvHeader = "model,n_sep,n_re,params,si_snri_db,sdri_db,rtf";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

EvalResult evaluate_with(const std::vector<MixtureExample>& examples,
                         const Estimator& estimator, Depths depths) {
  if (examples.empty()) throw Error("evaluate: empty split");
  EvalResult out;
  out.depths = depths;
  for (const auto& ex : examples) {
    const std::vector<Waveform> est = estimator(ex);
    if (est.size() != ex.sources.size()) {
      throw ShapeError("evaluate: estimator returned " + std::to_string(est.size()) +
                       " signals for " + std::to_string(ex.sources.size()) + " sources");
    }
    const PitResult pit = pit_assign(est, ex.sources);
    UtteranceScore u;
    u.seed = ex.seed;
    u.perm = pit.perm;
    const Real j = static_cast<Real>(est.size());
    Real mix_si = 0, est_sdr = 0, mix_sdr = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      const Waveform& ref = ex.sources[static_cast<std::size_t>(pit.perm[i])];
      est_sdr += sdr(est[i], ref);
      mix_si += si_snr(ex.mixture, ex.sources[i]);
      mix_sdr += sdr(ex.mixture, ex.sources[i]);
    }
    u.si_snri = pit.mean_si_snr - mix_si / j;
    u.sdri = (est_sdr - mix_sdr) / j;
    out.table.push_back(std::move(u));
  }
  out.count = static_cast<int>(out.table.size());
  std::vector<Real> si;
  for (const auto& u : out.table) {
    out.mean_si_snri += u.si_snri;
    out.mean_sdri += u.sdri;
    si.push_back(u.si_snri);
  }
  out.mean_si_snri /= out.count;
  out.mean_sdri /= out.count;
  std::sort(si.begin(), si.end());
  const std::size_t mid = si.size() / 2;
  out.median_si_snri = si.size() % 2 == 1 ? si[mid] : 0.5 * (si[mid - 1] + si[mid]);
  return out;
}

EvalResult evaluate(const ModelParams& params, const std::vector<MixtureExample>& examples,
                    int n_sep, int n_re) {
  if (n_sep < 1 || n_re < 1) throw ConfigError("evaluate: depths must be >= 1");
  return evaluate_with(
      examples,
      [&](const MixtureExample& ex) {
        return forward(params, ex.mixture, n_sep, n_re, false).waves;
      },
      Depths{n_sep, n_re});
}

EvalResult evaluate(const ModelParams& params, const Manifest& manifest, Split split,
                    int n_sep, int n_re) {
  std::vector<MixtureExample> examples;
  for (const auto& e : manifest.split(split)) examples.push_back(manifest.load(e));
  return evaluate(params, examples, n_sep, n_re);
}

Real measure_rtf(const ModelParams& params, int n_sep, int n_re, Real duration,
                 int repeats) {
  if (repeats < 3) throw ConfigError("measure_rtf: repeats must be >= 3");
  if (!(duration > 0)) throw ConfigError("measure_rtf: duration must be positive");
  MixtureParams mp;
  mp.speakers = std::max(2, params.config.speakers);
  mp.duration = duration;
  const Waveform input = synth_mixture(0, mp).mixture;
  (void)forward(params, input, n_sep, n_re, false);
  std::vector<Real> times;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)forward(params, input, n_sep, n_re, false);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<Real>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  const Real median =
      times.size() % 2 == 1 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  return median / (static_cast<Real>(input.length()) / input.sample_rate);
}

SweepReport sweep(const ModelParams& params, const std::vector<MixtureExample>& examples,
                  const std::vector<int>& n_re_list, int n_sep,
                  const std::string& model_label, const std::string& dataset_label,
                  const RtfOptions& rtf) {
  if (n_re_list.empty()) throw ConfigError("sweep: n_re list is empty");
  for (int n : n_re_list) {
    if (n < 1) throw ConfigError("sweep: n_re values must be >= 1");
  }
  SweepReport report;
  report.model_label = model_label;
  report.dataset_label = dataset_label;
  const std::int64_t count = count_parameters(params);
  for (int n_re : n_re_list) {
    const EvalResult r = evaluate(params, examples, n_sep, n_re);
    SweepRow row;
    row.n_sep = n_sep;
    row.n_re = n_re;
    row.params = count;
    row.si_snri_db = r.mean_si_snri;
    row.sdri_db = r.mean_sdri;
    row.rtf = rtf.enabled ? measure_rtf(params, n_sep, n_re, rtf.duration, rtf.repeats) : 0;
    report.rows.push_back(row);
  }
  return report;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "text") return ReportFormat::kText;
  throw ConfigError("unknown report format '" + name + "' (csv or text)");
}

std::string format_report(const SweepReport& report, ReportFormat format) {
  std::ostringstream out;
  char buf[256];
  if (format == ReportFormat::kCsv) {
    out << kCsvHeader << '\n';
    for (const auto& r : report.rows) {
      std::snprintf(buf, sizeof buf, ",%d,%d,%lld,%.6f,%.6f,%.8f\n", r.n_sep, r.n_re,
                    static_cast<long long>(r.params), r.si_snri_db, r.sdri_db, r.rtf);
      out << csv_field(report.model_label) << buf;
    }
    return out.str();
  }
  out << "model:   " << report.model_label << '\n'
      << "dataset: " << report.dataset_label << '\n';
  std::snprintf(buf, sizeof buf, "%6s %5s %10s %11s %9s %10s\n", "n_sep", "n_re", "params",
                "SI-SNRi dB", "SDRi dB", "RTF");
  out << buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%6d %5d %10lld %11.3f %9.3f %10.5f\n", r.n_sep, r.n_re,
                  static_cast<long long>(r.params), r.si_snri_db, r.sdri_db, r.rtf);
    out << buf;
  }
  return out.str();
}

void emit_report(const SweepReport& report, const std::string& path, ReportFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report '" + path + "'");
  out << format_report(report, format);
  if (!out) throw IoError("write failed for report '" + path + "'");
}

SweepReport read_csv_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw IoError("'" + path + "' does not start with the sweep CSV header");
  }
  SweepReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw IoError("malformed CSV row in '" + path + "': " + line);
    try {
      report.model_label = f[0];
      SweepRow r;
      r.n_sep = std::stoi(f[1]);
      r.n_re = std::stoi(f[2]);
      r.params = std::stoll(f[3]);
      r.si_snri_db = std::stod(f[4]);
      r.sdri_db = std::stod(f[5]);
      r.rtf = std::stod(f[6]);
      report.rows.push_back(r);
    } catch (const std::exception&) {
      throw IoError("malformed CSV row in '" + path + "': " + line);
    }
  }
  return report;
}

}  // namespace scalesep
