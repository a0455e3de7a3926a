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

#include "scalesep/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "scalesep/errors.hpp"

namespace scalesep {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}
void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

WavEncoding parse_wav_encoding(const std::string& name) {
  if (name == "pcm16") return WavEncoding::kPcm16;
  if (name == "float32") return WavEncoding::kFloat32;
  throw ConfigError("unknown wav encoding '" + name + "' (pcm16 or float32)");
}

std::string to_string(WavEncoding encoding) {
  return encoding == WavEncoding::kPcm16 ? "pcm16" : "float32";
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " in '" + path + "'";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file" + where);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw IoError("truncated chunk" + where);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw IoError("short fmt chunk" + where);
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && size >= 26) format = read_u16(chunk + 32);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (!have_fmt || data == nullptr) throw IoError("missing fmt or data chunk" + where);
  if (channels != 1) {
    throw IoError("unsupported channel count " + std::to_string(channels) +
                  " (mono only)" + where);
  }
  if (rate != static_cast<std::uint32_t>(kDefaultSampleRate)) {
    throw IoError("unsupported sample rate " + std::to_string(rate) +
                  " Hz (8000 only)" + where);
  }
  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    wave.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      wave.samples[i] = static_cast<std::int16_t>(read_u16(data + 2 * i)) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    wave.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t raw = read_u32(data + 4 * i);
      float f;
      std::memcpy(&f, &raw, sizeof f);
      wave.samples[i] = f;
    }
  } else {
    throw IoError("unsupported sample format (pcm16 or float32 only)" + where);
  }
  if (wave.samples.empty()) throw IoError("empty data chunk" + where);
  return wave;
}

void write_wav(const std::string& path, const Waveform& wave,
               WavEncoding encoding) {
  if (wave.sample_rate != kDefaultSampleRate) {
    throw IoError("unsupported sample rate " + std::to_string(wave.sample_rate));
  }
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(wave.samples.size() * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * (bits / 8));
  put_u16(out, static_cast<std::uint16_t>(bits / 8));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);
  for (Real s : wave.samples) {
    if (pcm) {
      const double q = std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      const float f = static_cast<float>(s);
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      put_u32(out, raw);
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write '" + path + "'");
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed for '" + path + "'");
}

}  // namespace scalesep
