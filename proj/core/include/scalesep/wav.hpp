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

#include "scalesep/dsp.hpp"

namespace scalesep {

enum class WavEncoding { kPcm16, kFloat32 };

WavEncoding parse_wav_encoding(const std::string& name);
std::string to_string(WavEncoding encoding);

// Mono RIFF/WAVE at 8 kHz only. PCM16 is scaled by 1/32768; float32 is
// stored as-is. Throws IoError on malformed or unsupported files.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wave,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace scalesep
