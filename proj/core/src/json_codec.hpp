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

#include <nlohmann/json.hpp>
#include "scalesep/config.hpp"

namespace scalesep::codec {

using Json = nlohmann::ordered_json;

Json to_json(const StftConfig& c);
Json to_json(const ModelConfig& c);
Json to_json(const LossConfig& c);
Json to_json(const TrainConfig& c);
Json data_to_json(const MixtureParams& p, const SplitCounts& counts,
                  const SeedBases& seeds);

// Overlay the keys present in `j` onto `out`; `where` prefixes messages.
void from_json(const Json& j, StftConfig& out, const std::string& where);
void from_json(const Json& j, ModelConfig& out, const std::string& where);
void from_json(const Json& j, LossConfig& out, const std::string& where);
void from_json(const Json& j, TrainConfig& out, const std::string& where);
void data_from_json(const Json& j, MixtureParams& p, SplitCounts& counts,
                    SeedBases& seeds, const std::string& where);

Json parse(const std::string& text, const std::string& where);

}  // namespace scalesep::codec
