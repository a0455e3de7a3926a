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

#include <optional>
#include <string>

namespace scalesep {

// sep{M_sep}x{N_sep}-re{M_re}x{N_re}[({inference N_re})][-l{label}]
struct ModelName {
  int m_sep = 1;
  int n_sep = 1;
  int m_re = 1;
  int n_re = 1;
  std::string loss_label;             // without the leading 'l'; may be empty
  std::optional<int> inference_n_re;  // absent: training depth applies

  int effective_n_re() const { return inference_n_re.value_or(n_re); }
  friend bool operator==(const ModelName&, const ModelName&) = default;
};

// Accepts 'x' or the multiplication sign between block count and repeats.
ModelName parse_model_name(const std::string& text);
std::string format_model_name(const ModelName& name);

}  // namespace scalesep
