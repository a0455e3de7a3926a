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

#include <vector>

#include "scalesep/autograd.hpp"

namespace scalesep {

class StftEngine;

// Differentiable primitives. All feature tensors are channel-last; the
// "sequence" ops take [B, S, C] with B independent sequences of length S.

Var add(const Var& a, const Var& b);
Var scale(const Var& a, Real factor);

// x [..., C] * w [C, O] (+ bias [O]) -> [..., O]. Pass an undefined Var to
// skip the bias.
Var linear(const Var& x, const Var& w, const Var& bias = Var());

// 1-D convolution along S with zero padding that keeps the length:
//   out[b, s] = bias + sum_k x[b, s + k - pad_left] * w[k]
// x [B, S, C], w [K, C, O], bias [O] -> [B, S, O]. `circular` wraps the
// index modulo S instead of reading zeros.
Var conv_seq(const Var& x, const Var& w, const Var& bias, int pad_left,
             bool circular = false);

// 2-D "same" convolution over (T, F): x [B, T, F, C], w [KT, KF, C, O],
// bias [O] -> [B, T, F, O]. Leading pad is (K - 1) / 2 on each axis.
Var conv2d_same(const Var& x, const Var& w, const Var& bias);

Var permute(const Var& x, const std::vector<int>& perm);
Var reshape(const Var& x, Shape shape);

// [..., 2H] -> [..., H]: first half times swish of the second half.
Var swiglu_gate(const Var& x);

// Root-mean-square normalization over channel groups of the last axis,
// scaled by gamma [C]. No mean subtraction.
Var rms_group_norm(const Var& x, const Var& gamma, int groups, Real eps);

// Per-item normalization over everything but axis 0, then per-channel
// affine: x [B, ..., C], gamma/beta [C].
Var global_layer_norm(const Var& x, const Var& gamma, const Var& beta,
                      Real eps);

// Scaled dot-product self-attention over packed projections.
// qkv [B, S, 3C] -> [B, S, C]. With `rope`, query/key pairs are rotated by
// their sequence position before the dot product.
Var attention_core(const Var& qkv, int heads, bool rope);

// Softmax weights computed by attention_core, [B, heads, S, S].
Tensor attention_weights(const Tensor& qkv, int heads, bool rope);

// Inverse STFT of a batch of spectra [J, T, F, 2] (re, im channel-last)
// to waveforms [J, length].
Var istft_batch(const Var& spec, const StftEngine& engine,
                std::int64_t length);

Tensor permute_tensor(const Tensor& x, const std::vector<int>& perm);

// In-place rotary embedding of one head vector at sequence position `pos`.
// direction = +1 applies the rotation, -1 its inverse (transpose).
void apply_rope(Real* vec, int head_dim, std::int64_t pos, int direction);

}  // namespace scalesep
