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

#include "scalesep/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "scalesep/errors.hpp"
#include "scalesep/ops.hpp"

namespace scalesep {
namespace {

constexpr int kCodecKernel = 3;
constexpr Real kBlockNormEps = 1e-5;
constexpr Real kGlobalNormEps = 1e-8;

std::string separator_prefix(const ModelConfig& config, int iteration,
                             int block) {
  std::string prefix = "separator.";
  if (!config.share_separator) prefix += "iter" + std::to_string(iteration) + ".";
  return prefix + "block" + std::to_string(block);
}

std::string reconstructor_prefix(const ModelConfig& config, int iteration,
                                 int block) {
  std::string prefix = "reconstructor.";
  if (!config.share_reconstructor) {
    prefix += "iter" + std::to_string(iteration) + ".";
  }
  return prefix + "block" + std::to_string(block);
}

void add_path_layout(std::vector<ParamSpec>& out, const ModelConfig& c,
                     const std::string& prefix) {
  const std::int64_t d = c.channels, h = c.hidden(), k = c.conv_kernel;
  for (const char* ffn : {".ffn1", ".ffn2"}) {
    const std::string p = prefix + ffn;
    out.push_back({p + ".norm.gamma", {d}, 0, 1});
    out.push_back({p + ".conv_in.weight", {k, d, 2 * h}, k * d, 0});
    out.push_back({p + ".conv_in.bias", {2 * h}, k * d, 0});
    out.push_back({p + ".conv_out.weight", {k, h, d}, k * h, 0});
    out.push_back({p + ".conv_out.bias", {d}, k * h, 0});
  }
  out.push_back({prefix + ".attn.norm.gamma", {d}, 0, 1});
  out.push_back({prefix + ".attn.qkv.weight", {d, 3 * d}, d, 0});
  out.push_back({prefix + ".attn.out.weight", {d, d}, d, 0});
}

// Uniform in [-1, 1) from the top 53 bits of a standardized engine, so the
// stream is identical across standard libraries.
Real uniform_pm1(std::mt19937_64& rng) {
  const Real u = static_cast<Real>(rng() >> 11) * 0x1.0p-53;
  return 2 * u - 1;
}

void check_finite(const Var& v, const char* stage) {
  if (!v.value().all_finite()) {
    throw DivergenceError(std::string("non-finite activations after ") + stage);
  }
}

Var sequence_block(const Var& x, bool positional, const PathParams& p,
                   const ModelConfig& c) {
  const ConvAxes axes = positional ? ConvAxes::kSequence : ConvAxes::kCircularSequence;
  const bool rope = positional;
  Var y = add(x, conv_swiglu(rms_group_norm(x, p.ffn1.norm_gamma, c.heads,
                                            kBlockNormEps),
                             axes, p.ffn1, c.conv_kernel));
  Var normed = rms_group_norm(y, p.attn.norm_gamma, c.heads, kBlockNormEps);
  Var attended = linear(attention_core(linear(normed, p.attn.qkv_w), c.heads, rope),
                        p.attn.out_w);
  y = add(y, attended);
  return add(y, conv_swiglu(rms_group_norm(y, p.ffn2.norm_gamma, c.heads,
                                           kBlockNormEps),
                            axes, p.ffn2, c.conv_kernel));
}

}  // namespace

SplitterKind parse_splitter_kind(const std::string& name) {
  if (name == "conv2d_swiglu") return SplitterKind::kConv2dSwiGLU;
  if (name == "conv2d") return SplitterKind::kConv2d;
  throw ConfigError("unknown splitter_kind '" + name + "'");
}

std::string to_string(SplitterKind kind) {
  return kind == SplitterKind::kConv2d ? "conv2d" : "conv2d_swiglu";
}

void ModelConfig::validate() const {
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (speakers < 1) throw ConfigError("speakers must be >= 1");
  if (sep_blocks < 1 || sep_repeats < 1) {
    throw ConfigError("sep_blocks and sep_repeats must be >= 1");
  }
  if (re_blocks < 1 || re_repeats < 1) {
    throw ConfigError("re_blocks and re_repeats must be >= 1");
  }
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError("heads (" + std::to_string(heads) +
                      ") must divide channels (" + std::to_string(channels) + ")");
  }
  if ((channels / heads) % 2 != 0) {
    throw ConfigError("per-head dimension must be even for rotary positions");
  }
  if (ffn_expansion < 1) throw ConfigError("ffn_expansion must be >= 1");
  if (conv_kernel < 1) throw ConfigError("conv_kernel must be >= 1");
  if (splitter_kernel < 1 || splitter_kernel % 2 == 0) {
    throw ConfigError("splitter_kernel must be a positive odd number");
  }
  stft.validate();
}

ModelConfig ModelConfig::medium() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.channels = 16;
  c.heads = 2;
  c.ffn_expansion = 2;
  c.conv_kernel = 3;
  // 31 Hz bins resolve the harmonic spacing of low voices.
  c.stft.window_size = 256;
  c.stft.hop = 128;
  return c;
}

const Var& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

ParamSnapshot ModelParams::snapshot() const {
  ParamSnapshot out;
  for (const auto& [name, var] : tensors) out.emplace(name, var.value());
  return out;
}

ModelParams ModelParams::from_snapshot(const ModelConfig& config,
                                       const ParamSnapshot& values,
                                       std::uint64_t init_seed) {
  config.validate();
  ModelParams params;
  params.config = config;
  params.init_seed = init_seed;
  for (const auto& spec : parameter_layout(config)) {
    auto it = values.find(spec.name);
    if (it == values.end()) {
      throw ConfigError("snapshot lacks parameter '" + spec.name + "'");
    }
    expect_shape(it->second, spec.shape, spec.name.c_str());
    if (!it->second.all_finite()) {
      throw DivergenceError("parameter '" + spec.name + "' is not finite");
    }
    params.tensors.emplace(spec.name, parameter(it->second));
  }
  if (values.size() != params.tensors.size()) {
    throw ConfigError("snapshot has parameters the config does not define");
  }
  return params;
}

void ModelParams::zero_grad() {
  for (auto& [name, var] : tensors) var.zero_grad();
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> out;
  const std::int64_t d = c.channels, j = c.speakers;
  const std::int64_t kc = kCodecKernel, ks = c.splitter_kernel;

  out.push_back({"encoder.conv.weight", {kc, kc, 2, d}, kc * kc * 2, 0});
  out.push_back({"encoder.conv.bias", {d}, kc * kc * 2, 0});
  out.push_back({"encoder.norm.gamma", {d}, 0, 1});
  out.push_back({"encoder.norm.beta", {d}, 0, 0});

  const int sep_copies = c.share_separator ? 1 : c.sep_repeats;
  for (int i = 0; i < sep_copies; ++i) {
    for (int m = 0; m < c.sep_blocks; ++m) {
      const std::string p = separator_prefix(c, i, m);
      add_path_layout(out, c, p + ".freq");
      add_path_layout(out, c, p + ".time");
    }
  }

  if (c.splitter_kind == SplitterKind::kConv2dSwiGLU) {
    const std::int64_t h = c.hidden();
    out.push_back({"splitter.conv_in.weight", {ks, ks, d, 2 * h}, ks * ks * d, 0});
    out.push_back({"splitter.conv_in.bias", {2 * h}, ks * ks * d, 0});
    out.push_back({"splitter.conv_out.weight", {ks, ks, h, j * d}, ks * ks * h, 0});
    out.push_back({"splitter.conv_out.bias", {j * d}, ks * ks * h, 0});
  } else {
    out.push_back({"splitter.conv.weight", {ks, ks, d, j * d}, ks * ks * d, 0});
    out.push_back({"splitter.conv.bias", {j * d}, ks * ks * d, 0});
  }

  const int re_copies = c.share_reconstructor ? 1 : c.re_repeats;
  for (int i = 0; i < re_copies; ++i) {
    for (int m = 0; m < c.re_blocks; ++m) {
      const std::string p = reconstructor_prefix(c, i, m);
      add_path_layout(out, c, p + ".freq");
      add_path_layout(out, c, p + ".time");
      add_path_layout(out, c, p + ".speaker");
    }
  }

  out.push_back({"decoder.conv.weight", {kc, kc, d, 2}, kc * kc * d, 0});
  out.push_back({"decoder.conv.bias", {2}, kc * kc * d, 0});

  std::sort(out.begin(), out.end(),
            [](const ParamSpec& a, const ParamSpec& b) { return a.name < b.name; });
  return out;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params;
  params.config = config;
  params.init_seed = seed;
  std::mt19937_64 rng(seed);
  for (const auto& spec : parameter_layout(config)) {
    Tensor t(spec.shape, spec.constant);
    if (spec.fan_in > 0) {
      const Real bound = 1 / std::sqrt(static_cast<Real>(spec.fan_in));
      for (auto& v : t.values()) v = bound * uniform_pm1(rng);
    }
    params.tensors.emplace(spec.name, parameter(std::move(t)));
  }
  return params;
}

std::int64_t count_parameters(const ModelParams& params) {
  std::int64_t n = 0;
  for (const auto& [name, var] : params.tensors) n += var.value().size();
  return n;
}

PathParams path_params(const ModelParams& params, const std::string& prefix) {
  auto ffn = [&](const std::string& p) {
    return FeedForwardParams{params.at(p + ".norm.gamma"),
                             params.at(p + ".conv_in.weight"),
                             params.at(p + ".conv_in.bias"),
                             params.at(p + ".conv_out.weight"),
                             params.at(p + ".conv_out.bias")};
  };
  return PathParams{ffn(prefix + ".ffn1"),
                    AttentionParams{params.at(prefix + ".attn.norm.gamma"),
                                    params.at(prefix + ".attn.qkv.weight"),
                                    params.at(prefix + ".attn.out.weight")},
                    ffn(prefix + ".ffn2")};
}

Var encode(const ModelParams& params, const Tensor& spec) {
  const auto& c = params.config;
  if (spec.rank() != 3 || spec.dim(1) != c.stft.bins() || spec.dim(2) != 2) {
    throw ShapeError("encode: expected [T, " + std::to_string(c.stft.bins()) +
                     ", 2], got " + shape_string(spec.shape()));
  }
  const std::int64_t frames = spec.dim(0), bins = spec.dim(1);
  Var x = constant(spec.reshaped({1, frames, bins, 2}));
  Var conv = conv2d_same(x, params.at("encoder.conv.weight"),
                         params.at("encoder.conv.bias"));
  Var z = global_layer_norm(conv, params.at("encoder.norm.gamma"),
                            params.at("encoder.norm.beta"), kGlobalNormEps);
  return reshape(z, {frames, bins, c.channels});
}

Var conv_swiglu(const Var& x, ConvAxes axes, const FeedForwardParams& ffn,
                int kernel_taps) {
  if (axes != ConvAxes::kTimeFrequency) {
    const bool circular = axes == ConvAxes::kCircularSequence;
    const int lead = (kernel_taps - 1) / 2;
    Var h = conv_seq(x, ffn.conv_in_w, ffn.conv_in_b, lead, circular);
    return conv_seq(swiglu_gate(h), ffn.conv_out_w, ffn.conv_out_b,
                    kernel_taps - 1 - lead, circular);
  }
  Var h = conv2d_same(x, ffn.conv_in_w, ffn.conv_in_b);
  return conv2d_same(swiglu_gate(h), ffn.conv_out_w, ffn.conv_out_b);
}

Var path_block(const Var& x, Axis axis, const PathParams& block,
               const ModelConfig& config) {
  const int rank = x.value().rank();
  if (rank != 3 && rank != 4) {
    throw ShapeError("path_block: expected [T, F, D] or [J, T, F, D], got " +
                     shape_string(x.shape()));
  }
  if (x.shape().back() != config.channels) {
    throw ShapeError("path_block: channel mismatch");
  }
  int position = 0;
  switch (axis) {
    case Axis::kSpeaker:
      if (rank != 4) throw ShapeError("path_block: speaker axis needs rank 4");
      position = 0;
      break;
    case Axis::kTime:
      position = rank - 3;
      break;
    case Axis::kFrequency:
      position = rank - 2;
      break;
  }
  // Move the modeled axis next to the channels; the rest folds into batch.
  std::vector<int> perm;
  for (int i = 0; i < rank - 1; ++i) {
    if (i != position) perm.push_back(i);
  }
  perm.push_back(position);
  perm.push_back(rank - 1);
  bool identity = true;
  for (int i = 0; i < rank; ++i) identity = identity && perm[static_cast<std::size_t>(i)] == i;

  Var moved = identity ? x : permute(x, perm);
  const Shape moved_shape = moved.shape();
  const std::int64_t seq = moved_shape[static_cast<std::size_t>(rank - 2)];
  const std::int64_t batch = moved.value().size() / (seq * config.channels);
  Var y = sequence_block(reshape(moved, {batch, seq, config.channels}),
                         axis != Axis::kSpeaker, block, config);
  y = reshape(y, moved_shape);
  if (identity) return y;
  std::vector<int> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }
  return permute(y, inverse);
}

Var sep_block(const Var& x, const ModelParams& params, const std::string& prefix) {
  Var y = path_block(x, Axis::kFrequency, path_params(params, prefix + ".freq"),
                     params.config);
  return path_block(y, Axis::kTime, path_params(params, prefix + ".time"),
                    params.config);
}

Var re_block(const Var& v, const ModelParams& params, const std::string& prefix) {
  Var y = path_block(v, Axis::kFrequency, path_params(params, prefix + ".freq"),
                     params.config);
  y = path_block(y, Axis::kTime, path_params(params, prefix + ".time"),
                 params.config);
  return path_block(y, Axis::kSpeaker, path_params(params, prefix + ".speaker"),
                    params.config);
}

IterationResult separate(const ModelParams& params, const Var& z, int n_sep) {
  const auto& c = params.config;
  if (n_sep < 1) throw ConfigError("n_sep must be >= 1");
  if (!c.share_separator && n_sep > c.sep_repeats) {
    throw ConfigError("non-shared Separator has only " +
                      std::to_string(c.sep_repeats) + " materialized passes");
  }
  IterationResult result;
  Var h = z;
  for (int i = 0; i < n_sep; ++i) {
    Var x = h;
    for (int m = 0; m < c.sep_blocks; ++m) {
      x = sep_block(x, params, separator_prefix(c, i, m));
    }
    h = c.iteration_residual ? add(x, h) : x;
    check_finite(h, "Separator pass");
    result.intermediates.push_back(h);
  }
  result.output = h;
  return result;
}

Var split(const ModelParams& params, const Var& h) {
  const auto& c = params.config;
  const Tensor& hv = h.value();
  if (hv.rank() != 3 || hv.dim(2) != c.channels) {
    throw ShapeError("split: expected [T, F, " + std::to_string(c.channels) +
                     "], got " + shape_string(hv.shape()));
  }
  const std::int64_t frames = hv.dim(0), bins = hv.dim(1);
  Var x = reshape(h, {1, frames, bins, c.channels});
  Var y;
  if (c.splitter_kind == SplitterKind::kConv2dSwiGLU) {
    FeedForwardParams p{Var(), params.at("splitter.conv_in.weight"),
                        params.at("splitter.conv_in.bias"),
                        params.at("splitter.conv_out.weight"),
                        params.at("splitter.conv_out.bias")};
    y = conv_swiglu(x, ConvAxes::kTimeFrequency, p, c.splitter_kernel);
  } else {
    y = conv2d_same(x, params.at("splitter.conv.weight"),
                    params.at("splitter.conv.bias"));
  }
  y = reshape(y, {frames, bins, c.speakers, c.channels});
  Var v = permute(y, {2, 0, 1, 3});
  check_finite(v, "Splitter");
  return v;
}

IterationResult reconstruct(const ModelParams& params, const Var& v, int n_re) {
  const auto& c = params.config;
  if (n_re < 1) throw ConfigError("n_re must be >= 1");
  if (!c.share_reconstructor && n_re > c.re_repeats) {
    throw ConfigError("non-shared Reconstructor has only " +
                      std::to_string(c.re_repeats) + " materialized passes");
  }
  if (v.value().rank() != 4 || v.shape().back() != c.channels) {
    throw ShapeError("reconstruct: expected [J, T, F, D], got " +
                     shape_string(v.shape()));
  }
  IterationResult result;
  Var h = v;
  for (int i = 0; i < n_re; ++i) {
    Var x = h;
    for (int m = 0; m < c.re_blocks; ++m) {
      x = re_block(x, params, reconstructor_prefix(c, i, m));
    }
    h = c.iteration_residual ? add(x, h) : x;
    check_finite(h, "Reconstructor pass");
    result.intermediates.push_back(h);
  }
  result.output = h;
  return result;
}

Decoded decode(const ModelParams& params, const Var& v,
               std::int64_t target_length) {
  const auto& c = params.config;
  const Tensor& vv = v.value();
  if (vv.rank() != 4 || vv.dim(2) != c.stft.bins() || vv.dim(3) != c.channels) {
    throw ShapeError("decode: expected [J, T, " + std::to_string(c.stft.bins()) +
                     ", " + std::to_string(c.channels) + "], got " +
                     shape_string(vv.shape()));
  }
  Decoded out;
  out.spectra = conv2d_same(v, params.at("decoder.conv.weight"),
                            params.at("decoder.conv.bias"));
  out.waves = istft_batch(out.spectra, StftEngine(c.stft), target_length);
  check_finite(out.waves, "Decoder");
  return out;
}

ForwardTrace forward_trace(const ModelParams& params, const Waveform& mixture,
                           Depths depths, SupervisionRequest request) {
  if (depths.n_sep < 1 || depths.n_re < 1) {
    throw ConfigError("inference depths must be >= 1");
  }
  mixture.validate();
  const auto& c = params.config;
  StftEngine engine(c.stft);
  Var z = encode(params, engine.analyze(mixture.samples));
  check_finite(z, "Encoder");

  ForwardTrace trace;
  trace.depths = depths;
  IterationResult sep = separate(params, z, depths.n_sep);
  trace.sep_features = sep.intermediates;
  trace.split_features = split(params, sep.output);
  IterationResult re = reconstruct(params, trace.split_features, depths.n_re);
  trace.re_features = re.intermediates;
  const std::int64_t length = mixture.length();
  trace.final = decode(params, re.output, length);

  if (request.sep) {
    for (int i = 0; i + 1 < depths.n_sep; ++i) {
      trace.sep_waves.push_back(
          decode(params, split(params, trace.sep_features[static_cast<std::size_t>(i)]),
                 length)
              .waves);
    }
  }
  if (request.split) {
    trace.split_waves = decode(params, trace.split_features, length).waves;
  }
  if (request.re) {
    for (int i = 0; i + 1 < depths.n_re; ++i) {
      trace.re_waves.push_back(
          decode(params, trace.re_features[static_cast<std::size_t>(i)], length)
              .waves);
    }
  }
  return trace;
}

std::vector<Waveform> split_waves(const Tensor& waves, int sample_rate) {
  if (waves.rank() != 2) throw ShapeError("expected [J, L] waveforms");
  const std::int64_t count = waves.dim(0), length = waves.dim(1);
  std::vector<Waveform> out(static_cast<std::size_t>(count));
  for (std::int64_t j = 0; j < count; ++j) {
    auto& w = out[static_cast<std::size_t>(j)];
    w.sample_rate = sample_rate;
    w.samples.assign(waves.data() + j * length, waves.data() + (j + 1) * length);
  }
  return out;
}

SeparationOutput forward(const ModelParams& params, const Waveform& mixture,
                         int n_sep, int n_re, bool collect_intermediates) {
  NoGradGuard no_grad;
  const Depths depths{n_sep, n_re};
  ForwardTrace trace =
      forward_trace(params, mixture, depths,
                    collect_intermediates ? SupervisionRequest::all()
                                          : SupervisionRequest{});
  SeparationOutput out;
  out.applied_depths = depths;
  out.waves = split_waves(trace.final.waves.value(), mixture.sample_rate);
  const Tensor& spectra = trace.final.spectra.value();
  out.spec = permute_tensor(spectra, {0, 3, 1, 2});
  if (!collect_intermediates) return out;

  for (const auto& f : trace.sep_features) out.sep_intermediates.push_back(f.value());
  out.splitter_output = trace.split_features.value();
  for (const auto& f : trace.re_features) out.re_intermediates.push_back(f.value());
  for (const auto& w : trace.sep_waves) {
    out.sep_estimates.push_back(split_waves(w.value(), mixture.sample_rate));
  }
  out.sep_estimates.push_back(
      split_waves(trace.split_waves.value(), mixture.sample_rate));
  for (const auto& w : trace.re_waves) {
    out.re_estimates.push_back(split_waves(w.value(), mixture.sample_rate));
  }
  out.re_estimates.push_back(out.waves);
  return out;
}

}  // namespace scalesep
