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

#include "scalesep/naming.hpp"

#include <regex>

#include "scalesep/errors.hpp"

namespace scalesep {
namespace {

const std::string kTimes = "\xC3\x97";

int positive(const std::string& digits, const std::string& text, const char* what) {
  int v = 0;
  try {
    v = std::stoi(digits);
  } catch (const std::exception&) {
    throw ConfigError("model name '" + text + "': bad " + what);
  }
  if (v < 1) throw ConfigError("model name '" + text + "': " + what + " must be >= 1");
  return v;
}

}  // namespace

ModelName parse_model_name(const std::string& text) {
  std::string s = text;
  for (auto pos = s.find(kTimes); pos != std::string::npos; pos = s.find(kTimes)) {
    s.replace(pos, kTimes.size(), "x");
  }
  static const std::regex pattern(
      R"(^sep(\d+)x(\d+)-re(\d+)x(\d+)(?:\((\d+)\))?(?:-l(\S+))?$)");
  std::smatch m;
  if (!std::regex_match(s, m, pattern)) {
    throw ConfigError("malformed model name '" + text +
                      "' (expected sep{a}x{b}-re{c}x{d}[({e})][-l{label}])");
  }
  ModelName out;
  out.m_sep = positive(m[1], text, "M_sep");
  out.n_sep = positive(m[2], text, "N_sep");
  out.m_re = positive(m[3], text, "M_re");
  out.n_re = positive(m[4], text, "N_re");
  if (m[5].matched) out.inference_n_re = positive(m[5], text, "inference N_re");
  if (m[6].matched) out.loss_label = m[6];
  return out;
}

std::string format_model_name(const ModelName& name) {
  std::string out = "sep" + std::to_string(name.m_sep) + "x" + std::to_string(name.n_sep) +
                    "-re" + std::to_string(name.m_re) + "x" + std::to_string(name.n_re);
  if (name.inference_n_re) out += "(" + std::to_string(*name.inference_n_re) + ")";
  if (!name.loss_label.empty()) out += "-l" + name.loss_label;
  return out;
}

}  // namespace scalesep
