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

#include "scalesep/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scalesep/errors.hpp"

namespace scalesep {
namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 180, kTop = 30, kBottom = 60;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_sweep_svg(const std::vector<SweepReport>& reports) {
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& r : reports) {
    for (const auto& row : r.rows) {
      x_lo = std::min<double>(x_lo, row.n_re);
      x_hi = std::max<double>(x_hi, row.n_re);
      y_lo = std::min(y_lo, row.si_snri_db);
      y_hi = std::max(y_hi, row.si_snri_db);
    }
  }
  if (x_lo > x_hi) throw Error("plot: no rows to draw");
  if (x_hi == x_lo) {
    x_lo -= 1;
    x_hi += 1;
  }
  const double pad = std::max(0.5, 0.1 * (y_hi - y_lo));
  y_lo = std::floor(y_lo - pad);
  y_hi = std::ceil(y_hi + pad);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\""
      << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int x = static_cast<int>(std::ceil(x_lo)); x <= static_cast<int>(x_hi); ++x) {
    svg << "<line x1=\"" << num(px(x)) << "\" y1=\"" << num(kTop + ph) << "\" x2=\""
        << num(px(x)) << "\" y2=\"" << num(kTop + ph + 5) << "\" stroke=\"black\"/>"
        << "<text x=\"" << num(px(x)) << "\" y=\"" << num(kTop + ph + 18)
        << "\" text-anchor=\"middle\">" << x << "</text>\n";
  }
  const double y_step = std::max(1.0, std::round((y_hi - y_lo) / 6));
  for (double y = y_lo; y <= y_hi + 1e-9; y += y_step) {
    svg << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(py(y)) << "\" x2=\""
        << num(kLeft + pw) << "\" y2=\"" << num(py(y)) << "\" stroke=\"#ddd\"/>"
        << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(py(y) + 4)
        << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  }
  svg << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 15)
      << "\" text-anchor=\"middle\">N_re used during inference</text>\n"
      << "<text transform=\"translate(18," << num(kTop + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">SI-SNRi [dB]</text>\n";

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const char* color = kColors[i % (sizeof kColors / sizeof kColors[0])];
    const auto& rows = reports[i].rows;
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& row : rows) svg << num(px(row.n_re)) << "," << num(py(row.si_snri_db)) << " ";
    svg << "\"/>\n";
    for (const auto& row : rows) {
      svg << "<circle cx=\"" << num(px(row.n_re)) << "\" cy=\"" << num(py(row.si_snri_db))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    svg << "<line x1=\"" << num(kLeft + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\""
        << num(kLeft + pw + 30) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/><text x=\"" << num(kLeft + pw + 35) << "\" y=\""
        << num(ly + 4) << "\">" << escape(reports[i].model_label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_sweep_svg(const std::vector<SweepReport>& reports, const std::string& path) {
  const std::string svg = render_sweep_svg(reports);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write plot '" + path + "'");
  out << svg;
}

}  // namespace scalesep
