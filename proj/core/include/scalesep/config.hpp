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

#include "scalesep/datagen.hpp"
#include "scalesep/model.hpp"
#include "scalesep/objectives.hpp"
#include "scalesep/trainer.hpp"

namespace scalesep {

// Everything a run needs. The JSON key tree mirrors the field names:
//   {"model": {...}, "loss": {...}, "train": {...}, "data": {...}}
// Absent keys keep their defaults; unknown keys are errors.
struct RunConfig {
  ModelConfig model = ModelConfig::tiny();
  LossConfig loss = LossConfig::from_label("l1+3");
  TrainConfig train;
  MixtureParams data;
  SplitCounts counts;
  SeedBases seeds;

  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& config);

}  // namespace scalesep
