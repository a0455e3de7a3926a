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

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scalesep/autograd.hpp"
#include "scalesep/dsp.hpp"

namespace scalesep {

enum class SplitterKind { kConv2dSwiGLU, kConv2d };

SplitterKind parse_splitter_kind(const std::string& name);
std::string to_string(SplitterKind kind);

// Hyperparameters of the separator network. Field names double as config
// file keys.
struct ModelConfig {
  int channels = 128;         // feature dimension D
  int speakers = 2;           // J
  int sep_blocks = 1;         // Sep-Blocks per Separator pass
  int sep_repeats = 2;        // training-time Separator repetitions
  int re_blocks = 1;          // Re-Blocks per Reconstructor pass
  int re_repeats = 3;         // training-time Reconstructor repetitions
  int heads = 4;
  int ffn_expansion = 3;      // hidden width = ffn_expansion * channels
  int conv_kernel = 4;        // taps of the gated-conv feed-forward
  SplitterKind splitter_kind = SplitterKind::kConv2dSwiGLU;
  int splitter_kernel = 3;    // square kernel of the splitter convolutions
  bool share_separator = true;
  bool share_reconstructor = true;
  bool iteration_residual = true;
  StftConfig stft;

  void validate() const;
  int hidden() const { return ffn_expansion * channels; }

  // Dimensions matching the medium TF-Locoformer setting (D=128, 4 heads,
  // 384 hidden, kernel 4) with one Sep-Block x2 and one Re-Block x3.
  static ModelConfig medium();
  // Desk-scale configuration used by the tests and the default CLI config.
  static ModelConfig tiny();
};

struct Depths {
  int n_sep = 1;
  int n_re = 1;
  friend bool operator==(const Depths&, const Depths&) = default;
};

using ParamSnapshot = std::map<std::string, Tensor>;

// Named trainable tensors plus the config that determined their shapes.
// Copies share the underlying tensors; use snapshot() for a deep copy.
struct ModelParams {
  ModelConfig config;
  std::uint64_t init_seed = 0;
  std::map<std::string, Var> tensors;

  const Var& at(const std::string& name) const;
  ParamSnapshot snapshot() const;
  static ModelParams from_snapshot(const ModelConfig& config,
                                   const ParamSnapshot& values,
                                   std::uint64_t init_seed = 0);
  void zero_grad();
};

struct ParamSpec {
  std::string name;
  Shape shape;
  std::int64_t fan_in = 0;  // 0 for norm scales/offsets
  Real constant = 0;        // init value when fan_in == 0
};

// Full parameter inventory implied by a config, sorted by name.
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
std::int64_t count_parameters(const ModelParams& params);

enum class Axis { kTime, kFrequency, kSpeaker };

// Parameter handles of one sequence-modeling path.
struct FeedForwardParams {
  Var norm_gamma, conv_in_w, conv_in_b, conv_out_w, conv_out_b;
};
struct AttentionParams {
  Var norm_gamma, qkv_w, out_w;
};
struct PathParams {
  FeedForwardParams ffn1;
  AttentionParams attn;
  FeedForwardParams ffn2;
};

PathParams path_params(const ModelParams& params, const std::string& prefix);

// Layouts (channel-last):
//   FeatureTensor    [T, F, D]
//   SpeakerFeatures  [J, T, F, D]
//   spectra          [J, T, F, 2]

// Z = gLN(Conv2D(X)); `spec` is [T, F, 2].
Var encode(const ModelParams& params, const Tensor& spec);

// Gated convolution over the sequence axis of [B, S, C] or over (T, F) of
// [B, T, F, C]; `kernel_taps` is the 1-D kernel length and is ignored for 2-D.
// kCircularSequence wraps around the sequence ends (speaker axis).
enum class ConvAxes { kSequence, kCircularSequence, kTimeFrequency };
Var conv_swiglu(const Var& x, ConvAxes axes, const FeedForwardParams& ffn,
                int kernel_taps);

// Pre-norm FFN -> rotary self-attention -> FFN, each with a residual, along
// `axis` of a [T, F, D] or [J, T, F, D] feature. On the speaker axis there
// are no rotary positions and the FFN convolutions wrap around, so swapping
// two speakers swaps the outputs.
Var path_block(const Var& x, Axis axis, const PathParams& block,
               const ModelConfig& config);

Var sep_block(const Var& x, const ModelParams& params, const std::string& prefix);
Var re_block(const Var& v, const ModelParams& params, const std::string& prefix);

struct IterationResult {
  Var output;
  std::vector<Var> intermediates;  // one per applied iteration
};

IterationResult separate(const ModelParams& params, const Var& z, int n_sep);
Var split(const ModelParams& params, const Var& h);
IterationResult reconstruct(const ModelParams& params, const Var& v, int n_re);

struct Decoded {
  Var waves;    // [J, L]
  Var spectra;  // [J, T, F, 2]
};
Decoded decode(const ModelParams& params, const Var& v,
               std::int64_t target_length);

// Which auxiliary estimates forward_trace should decode.
struct SupervisionRequest {
  bool sep = false;    // first n_sep - 1 Separator outputs via Splitter+Decoder
  bool split = false;  // Splitter output of the last Separator pass
  bool re = false;     // first n_re - 1 Reconstructor outputs
  static SupervisionRequest all() { return {true, true, true}; }
};

// Autograd view of one forward pass.
struct ForwardTrace {
  Depths depths;
  Decoded final;
  std::vector<Var> sep_features;     // [T, F, D] per Separator pass
  Var split_features;                // [J, T, F, D]
  std::vector<Var> re_features;      // [J, T, F, D] per Reconstructor pass
  std::vector<Var> sep_waves;        // [J, L], passes 1..n_sep-1
  Var split_waves;                   // [J, L]
  std::vector<Var> re_waves;         // [J, L], passes 1..n_re-1
};

ForwardTrace forward_trace(const ModelParams& params, const Waveform& mixture,
                           Depths depths, SupervisionRequest request);

struct SeparationOutput {
  std::vector<Waveform> waves;              // J estimates of input length
  Tensor spec;                              // [J, 2, T, F]
  std::vector<Tensor> sep_intermediates;    // [T, F, D] x applied n_sep
  Tensor splitter_output;                   // [J, T, F, D]
  std::vector<Tensor> re_intermediates;     // [J, T, F, D] x applied n_re
  Depths applied_depths;
  // Per-stage estimates when intermediates are collected. The last entry of
  // sep_estimates is the Splitter estimate; the last of re_estimates equals
  // `waves`.
  std::vector<std::vector<Waveform>> sep_estimates;
  std::vector<std::vector<Waveform>> re_estimates;
};

SeparationOutput forward(const ModelParams& params, const Waveform& mixture,
                         int n_sep, int n_re, bool collect_intermediates);

std::vector<Waveform> split_waves(const Tensor& waves, int sample_rate);

}  // namespace scalesep
