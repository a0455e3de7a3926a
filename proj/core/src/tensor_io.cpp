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

#include "scalesep/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "scalesep/errors.hpp"

namespace scalesep {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor archives assume a little-endian host");

constexpr char kMagic[8] = {'S', 'S', 'E', 'P', 'T', 'N', 'S', '1'};
constexpr std::uint32_t kMaxRank = 16;
constexpr std::uint32_t kMaxName = 4096;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::ifstream& in, const std::string& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw IoError("truncated tensor archive '" + path + "'");
  }
  return v;
}

}  // namespace

void write_tensor_archive(const std::string& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  put<std::uint64_t>(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(Real)));
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

TensorMap read_tensor_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError("'" + path + "' is not a tensor archive");
  }
  const auto count = take<std::uint64_t>(in, path);
  TensorMap out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(in, path);
    if (name_len > kMaxName) throw IoError("corrupt name length in '" + path + "'");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("truncated tensor archive '" + path + "'");
    const auto rank = take<std::uint32_t>(in, path);
    if (rank > kMaxRank) throw IoError("corrupt rank in '" + path + "'");
    Shape shape(rank);
    for (auto& d : shape) {
      d = take<std::int64_t>(in, path);
      if (d < 0) throw IoError("negative dimension in '" + path + "'");
    }
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(Real)))) {
      throw IoError("truncated tensor archive '" + path + "'");
    }
    if (!out.emplace(std::move(name), std::move(t)).second) {
      throw IoError("duplicate tensor name in '" + path + "'");
    }
  }
  return out;
}

}  // namespace scalesep
