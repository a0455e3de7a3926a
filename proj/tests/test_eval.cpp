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
#include <fstream>
#include <string>

#include "helpers.hpp"
#include "scalesep/errors.hpp"
#include "scalesep/eval.hpp"
#include "scalesep/objectives.hpp"
#include "scalesep/plot.hpp"

namespace scalesep {
namespace {

ModelParams micro_params() {
  ModelConfig c = ModelConfig::tiny();
  c.channels = 4;
  c.ffn_expansion = 2;
  c.re_repeats = 3;
  return init_model(c, 2);
}

std::vector<MixtureExample> examples(int count, Real duration = 0.1) {
  MixtureParams p;
  p.duration = duration;
  std::vector<MixtureExample> out;
  for (int i = 0; i < count; ++i) out.push_back(synth_mixture(static_cast<std::uint64_t>(50 + i), p));
  return out;
}

int count_lines(const std::string& path) {
  std::ifstream in(path);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

TEST(Evaluate, IdentityStubScoresZero) {
  const auto ex = examples(4);
  const EvalResult r = evaluate_with(ex, [](const MixtureExample& e) {
    return std::vector<Waveform>(e.sources.size(), e.mixture);
  });
  EXPECT_EQ(r.count, 4);
  EXPECT_EQ(r.table.size(), 4u);
  EXPECT_NEAR(r.mean_si_snri, 0, 1e-12);
  EXPECT_NEAR(r.mean_sdri, 0, 1e-12);
}

TEST(Evaluate, OracleStubIsCapMinusMixture) {
  const auto ex = examples(3);
  const EvalResult r = evaluate_with(ex, [](const MixtureExample& e) {
    // Reversed order: PIT must undo it.
    return std::vector<Waveform>{e.sources[1], e.sources[0]};
  });
  Real want = 0;
  for (const auto& e : ex) {
    for (std::size_t j = 0; j < 2; ++j) {
      want += (si_snr(e.sources[j], e.sources[j]) - si_snr(e.mixture, e.sources[j])) / 6;
    }
  }
  EXPECT_NEAR(r.mean_si_snri, want, 1e-9);
  EXPECT_GT(r.mean_si_snri, 0);
  for (const auto& u : r.table) EXPECT_EQ(u.perm, (std::vector<int>{1, 0}));
}

TEST(Evaluate, ErrorsAndCounts) {
  EXPECT_THROW(evaluate_with({}, [](const MixtureExample& e) { return e.sources; }), Error);
  EXPECT_THROW(evaluate_with(examples(1),
                             [](const MixtureExample& e) {
                               return std::vector<Waveform>{e.mixture};
                             }),
               ShapeError);
  MixtureParams p;
  p.duration = 0.1;
  const Manifest m = build_dataset({2, 1, 3}, p);
  const EvalResult r = evaluate(micro_params(), m, Split::kTest, 1, 2);
  EXPECT_EQ(r.count, 3);
  EXPECT_EQ(r.depths, (Depths{1, 2}));
  EXPECT_THROW(evaluate(micro_params(), m, Split::kTest, 0, 2), ConfigError);
}

TEST(Sweep, RowsShareParameterCount) {
  const ModelParams p = micro_params();
  const auto ex = examples(2);
  RtfOptions off;
  off.enabled = false;
  const SweepReport rep = sweep(p, ex, {1, 2, 3, 4, 5, 6, 7, 8}, 1, "micro", "synthetic", off);
  ASSERT_EQ(rep.rows.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(rep.rows[i].n_re, static_cast<int>(i + 1));
    EXPECT_EQ(rep.rows[i].params, count_parameters(p));
    EXPECT_EQ(rep.rows[i].rtf, 0);
  }
  const SweepReport one = sweep(p, ex, {3}, 1, "micro", "synthetic", off);
  ASSERT_EQ(one.rows.size(), 1u);
  const EvalResult direct = evaluate(p, ex, 1, 3);
  EXPECT_DOUBLE_EQ(one.rows[0].si_snri_db, direct.mean_si_snri);
  EXPECT_DOUBLE_EQ(one.rows[0].sdri_db, direct.mean_sdri);
  EXPECT_THROW(sweep(p, ex, {}, 1, "m", "d", off), ConfigError);
  EXPECT_THROW(sweep(p, ex, {0}, 1, "m", "d", off), ConfigError);
}

TEST(Rtf, GrowsWithDepthAndTracksDuration) {
  const ModelParams p = micro_params();
  EXPECT_THROW(measure_rtf(p, 1, 1, 0.5, 1), ConfigError);
  const Real shallow = measure_rtf(p, 1, 1, 0.5, 3);
  const Real deep = measure_rtf(p, 1, 6, 0.5, 3);
  EXPECT_GT(deep, shallow);
  const Real longer = measure_rtf(p, 1, 1, 1.0, 3);
  // RTF is per second of audio, so doubling the clip keeps it roughly flat.
  EXPECT_GT(longer / shallow, 0.5);
  EXPECT_LT(longer / shallow, 1.5);
}

SweepReport sample_report() {
  SweepReport r;
  r.model_label = "sep1x2-re1x3-l1+3";
  r.dataset_label = "synthetic";
  for (int n = 1; n <= 8; ++n) {
    r.rows.push_back({2, n, 123456, 5.0 + 0.123456789 * n, 4.0 - 0.01 * n, 0.001234567 * n});
  }
  return r;
}

TEST(Report, CsvRoundTrip) {
  const std::string dir = testing::scratch_dir("report");
  const SweepReport r = sample_report();
  emit_report(r, dir + "/sweep.csv", ReportFormat::kCsv);
  EXPECT_EQ(count_lines(dir + "/sweep.csv"), 9);
  const SweepReport back = read_csv_report(dir + "/sweep.csv");
  ASSERT_EQ(back.rows.size(), 8u);
  EXPECT_EQ(back.model_label, r.model_label);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(back.rows[i].n_sep, 2);
    EXPECT_EQ(back.rows[i].n_re, r.rows[i].n_re);
    EXPECT_EQ(back.rows[i].params, 123456);
    EXPECT_NEAR(back.rows[i].si_snri_db, r.rows[i].si_snri_db, 5e-5);
    EXPECT_NEAR(back.rows[i].sdri_db, r.rows[i].sdri_db, 5e-5);
    EXPECT_NEAR(back.rows[i].rtf, r.rows[i].rtf, 5e-5);
  }
  const std::string csv = format_report(r, ReportFormat::kCsv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,n_sep,n_re,params,si_snri_db,sdri_db,rtf");
}

TEST(Report, TextFormatAndErrors) {
  const std::string text = format_report(sample_report(), ReportFormat::kText);
  EXPECT_NE(text.find("sep1x2-re1x3-l1+3"), std::string::npos);
  EXPECT_NE(text.find("synthetic"), std::string::npos);
  EXPECT_EQ(parse_report_format("text"), ReportFormat::kText);
  EXPECT_THROW(parse_report_format("xml"), ConfigError);
  EXPECT_THROW(emit_report(sample_report(), "/nonexistent_dir/x/y.csv", ReportFormat::kCsv),
               IoError);
  const std::string dir = testing::scratch_dir("report_bad");
  std::ofstream(dir + "/bad.csv") << "a,b\n1,2\n";
  EXPECT_THROW(read_csv_report(dir + "/bad.csv"), IoError);
}

TEST(Plot, SvgHasOneLinePerReport) {
  SweepReport second = sample_report();
  second.model_label = "other";
  const std::string svg = render_sweep_svg({sample_report(), second});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t lines = 0;
  for (std::size_t at = svg.find("<polyline"); at != std::string::npos;
       at = svg.find("<polyline", at + 1)) {
    ++lines;
  }
  EXPECT_EQ(lines, 2u);
  EXPECT_NE(svg.find("other"), std::string::npos);
}

}  // namespace
}  // namespace scalesep
