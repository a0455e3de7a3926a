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

#include <string>
#include <vector>

#include "scalesep/eval.hpp"

namespace scalesep {

// SI-SNRi against inference N_re, one polyline per report.
std::string render_sweep_svg(const std::vector<SweepReport>& reports);
void write_sweep_svg(const std::vector<SweepReport>& reports, const std::string& path);

}  // namespace scalesep
