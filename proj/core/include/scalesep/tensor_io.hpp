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

#include <map>
#include <string>

#include "scalesep/tensor.hpp"

namespace scalesep {

using TensorMap = std::map<std::string, Tensor>;

// Binary archive: magic, entry count, then per entry the name, shape and raw
// little-endian doubles. Doubles round-trip bit-exactly.
void write_tensor_archive(const std::string& path, const TensorMap& tensors);
TensorMap read_tensor_archive(const std::string& path);

}  // namespace scalesep
