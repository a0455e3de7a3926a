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

#include "scalesep/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "scalesep/dsp.hpp"
#include "scalesep/errors.hpp"

namespace scalesep {
namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>;

std::int64_t last_dim(const Tensor& t) { return t.shape().back(); }

// Row (b, s) of dst <- row (b, s + delta) of src, zero when out of range.
std::int64_t wrap(std::int64_t i, std::int64_t n) { return ((i % n) + n) % n; }

void gather_shift(const Real* src, Real* dst, std::int64_t batches,
                  std::int64_t seq, std::int64_t width, std::int64_t delta,
                  bool circular = false) {
  for (std::int64_t b = 0; b < batches; ++b) {
    for (std::int64_t s = 0; s < seq; ++s) {
      Real* out = dst + (b * seq + s) * width;
      const std::int64_t src_s = circular ? wrap(s + delta, seq) : s + delta;
      if (src_s < 0 || src_s >= seq) {
        std::fill(out, out + width, Real(0));
      } else {
        const Real* in = src + (b * seq + src_s) * width;
        std::copy(in, in + width, out);
      }
    }
  }
}

// Row (b, s + delta) of dst += row (b, s) of src.
void scatter_shift_add(const Real* src, Real* dst, std::int64_t batches,
                       std::int64_t seq, std::int64_t width,
                       std::int64_t delta, bool circular = false) {
  if (circular) {
    for (std::int64_t b = 0; b < batches; ++b) {
      for (std::int64_t s = 0; s < seq; ++s) {
        const Real* in = src + (b * seq + s) * width;
        Real* out = dst + (b * seq + wrap(s + delta, seq)) * width;
        for (std::int64_t c = 0; c < width; ++c) out[c] += in[c];
      }
    }
    return;
  }
  for (std::int64_t b = 0; b < batches; ++b) {
    const std::int64_t lo = std::max<std::int64_t>(0, -delta);
    const std::int64_t hi = std::min<std::int64_t>(seq, seq - delta);
    for (std::int64_t s = lo; s < hi; ++s) {
      const Real* in = src + (b * seq + s) * width;
      Real* out = dst + (b * seq + s + delta) * width;
      for (std::int64_t c = 0; c < width; ++c) out[c] += in[c];
    }
  }
}

void gather_shift2d(const Real* src, Real* dst, std::int64_t batches,
                    std::int64_t rows, std::int64_t cols, std::int64_t width,
                    std::int64_t dr, std::int64_t dc) {
  for (std::int64_t b = 0; b < batches; ++b) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const std::int64_t sr = r + dr;
      for (std::int64_t c = 0; c < cols; ++c) {
        Real* out = dst + ((b * rows + r) * cols + c) * width;
        const std::int64_t sc = c + dc;
        if (sr < 0 || sr >= rows || sc < 0 || sc >= cols) {
          std::fill(out, out + width, Real(0));
        } else {
          const Real* in = src + ((b * rows + sr) * cols + sc) * width;
          std::copy(in, in + width, out);
        }
      }
    }
  }
}

void scatter_shift2d_add(const Real* src, Real* dst, std::int64_t batches,
                         std::int64_t rows, std::int64_t cols,
                         std::int64_t width, std::int64_t dr,
                         std::int64_t dc) {
  for (std::int64_t b = 0; b < batches; ++b) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const std::int64_t tr = r + dr;
      if (tr < 0 || tr >= rows) continue;
      for (std::int64_t c = 0; c < cols; ++c) {
        const std::int64_t tc = c + dc;
        if (tc < 0 || tc >= cols) continue;
        const Real* in = src + ((b * rows + r) * cols + c) * width;
        Real* out = dst + ((b * rows + tr) * cols + tc) * width;
        for (std::int64_t k = 0; k < width; ++k) out[k] += in[k];
      }
    }
  }
}

Real sigmoid(Real x) { return 1 / (1 + std::exp(-x)); }

}  // namespace

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  Tensor out = a.value();
  out.add_(b.value());
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) a.node()->grad_buffer().add_(self.grad);
    if (b.requires_grad()) b.node()->grad_buffer().add_(self.grad);
  });
}

Var scale(const Var& a, Real factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  return make_result(std::move(out), {a}, [a, factor](Node& self) {
    a.node()->grad_buffer().add_(self.grad, factor);
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  const std::int64_t in = last_dim(x.value());
  if (w.value().rank() != 2 || w.value().dim(0) != in) {
    throw ShapeError("linear: input " + shape_string(x.shape()) +
                     " incompatible with weight " + shape_string(w.shape()));
  }
  const std::int64_t out_dim = w.value().dim(1);
  const std::int64_t rows = x.value().size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  MatMap y(out.data(), rows, out_dim);
  y.noalias() = ConstMatMap(x.value().data(), rows, in) *
                ConstMatMap(w.value().data(), in, out_dim);
  if (bias.defined()) {
    expect_shape(bias.value(), {out_dim}, "linear bias");
    y.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(
        bias.value().data(), out_dim);
  }
  std::vector<Var> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents,
                     [x, w, bias, rows, in, out_dim](Node& self) {
    ConstMatMap dy(self.grad.data(), rows, out_dim);
    if (x.requires_grad()) {
      MatMap dx(x.node()->grad_buffer().data(), rows, in);
      dx.noalias() += dy * ConstMatMap(w.value().data(), in, out_dim).transpose();
    }
    if (w.requires_grad()) {
      MatMap dw(w.node()->grad_buffer().data(), in, out_dim);
      dw.noalias() += ConstMatMap(x.value().data(), rows, in).transpose() * dy;
    }
    if (bias.defined() && bias.requires_grad()) {
      VecMap db(bias.node()->grad_buffer().data(), out_dim);
      db += dy.colwise().sum();
    }
  });
}

Var conv_seq(const Var& x, const Var& w, const Var& bias, int pad_left,
             bool circular) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 3 || wv.dim(1) != xv.dim(2)) {
    throw ShapeError("conv_seq: input " + shape_string(xv.shape()) +
                     " incompatible with weight " + shape_string(wv.shape()));
  }
  const std::int64_t batches = xv.dim(0), seq = xv.dim(1), in = xv.dim(2);
  const std::int64_t taps = wv.dim(0), out_dim = wv.dim(2);
  const std::int64_t rows = batches * seq;
  if (pad_left < 0 || pad_left >= taps) {
    throw ShapeError("conv_seq: pad_left out of range");
  }

  Tensor out({batches, seq, out_dim});
  MatMap y(out.data(), rows, out_dim);
  if (bias.defined()) {
    expect_shape(bias.value(), {out_dim}, "conv_seq bias");
    y.rowwise() = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(
        bias.value().data(), out_dim);
  }
  Mat shifted(rows, in);
  for (std::int64_t k = 0; k < taps; ++k) {
    gather_shift(xv.data(), shifted.data(), batches, seq, in, k - pad_left,
                 circular);
    y.noalias() += shifted * ConstMatMap(wv.data() + k * in * out_dim, in, out_dim);
  }

  std::vector<Var> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_result(
      std::move(out), parents,
      [x, w, bias, batches, seq, in, taps, out_dim, rows, pad_left,
       circular](Node& self) {
        ConstMatMap dy(self.grad.data(), rows, out_dim);
        const Real* wd = w.value().data();
        if (bias.defined() && bias.requires_grad()) {
          VecMap db(bias.node()->grad_buffer().data(), out_dim);
          db += dy.colwise().sum();
        }
        Mat buffer(rows, in);
        for (std::int64_t k = 0; k < taps; ++k) {
          const std::int64_t delta = k - pad_left;
          ConstMatMap wk(wd + k * in * out_dim, in, out_dim);
          if (w.requires_grad()) {
            gather_shift(x.value().data(), buffer.data(), batches, seq, in, delta,
                         circular);
            MatMap dw(w.node()->grad_buffer().data() + k * in * out_dim, in,
                      out_dim);
            dw.noalias() += buffer.transpose() * dy;
          }
          if (x.requires_grad()) {
            buffer.noalias() = dy * wk.transpose();
            scatter_shift_add(buffer.data(), x.node()->grad_buffer().data(),
                              batches, seq, in, delta, circular);
          }
        }
      });
}

Var conv2d_same(const Var& x, const Var& w, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(2) != xv.dim(3)) {
    throw ShapeError("conv2d: input " + shape_string(xv.shape()) +
                     " incompatible with weight " + shape_string(wv.shape()));
  }
  const std::int64_t batches = xv.dim(0), rows_t = xv.dim(1), cols_f = xv.dim(2);
  const std::int64_t in = xv.dim(3);
  const std::int64_t kt = wv.dim(0), kf = wv.dim(1), out_dim = wv.dim(3);
  const std::int64_t pt = (kt - 1) / 2, pf = (kf - 1) / 2;
  const std::int64_t positions = batches * rows_t * cols_f;

  Tensor out({batches, rows_t, cols_f, out_dim});
  MatMap y(out.data(), positions, out_dim);
  if (bias.defined()) {
    expect_shape(bias.value(), {out_dim}, "conv2d bias");
    y.rowwise() = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(
        bias.value().data(), out_dim);
  }
  Mat shifted(positions, in);
  for (std::int64_t i = 0; i < kt; ++i) {
    for (std::int64_t j = 0; j < kf; ++j) {
      gather_shift2d(xv.data(), shifted.data(), batches, rows_t, cols_f, in,
                     i - pt, j - pf);
      y.noalias() += shifted * ConstMatMap(wv.data() + (i * kf + j) * in * out_dim,
                                           in, out_dim);
    }
  }

  std::vector<Var> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents,
                     [x, w, bias, batches, rows_t, cols_f, in, kt, kf, pt, pf,
                      out_dim, positions](Node& self) {
    ConstMatMap dy(self.grad.data(), positions, out_dim);
    if (bias.defined() && bias.requires_grad()) {
      VecMap db(bias.node()->grad_buffer().data(), out_dim);
      db += dy.colwise().sum();
    }
    Mat buffer(positions, in);
    for (std::int64_t i = 0; i < kt; ++i) {
      for (std::int64_t j = 0; j < kf; ++j) {
        const std::int64_t offset = (i * kf + j) * in * out_dim;
        if (w.requires_grad()) {
          gather_shift2d(x.value().data(), buffer.data(), batches, rows_t,
                         cols_f, in, i - pt, j - pf);
          MatMap dw(w.node()->grad_buffer().data() + offset, in, out_dim);
          dw.noalias() += buffer.transpose() * dy;
        }
        if (x.requires_grad()) {
          buffer.noalias() =
              dy * ConstMatMap(w.value().data() + offset, in, out_dim).transpose();
          scatter_shift2d_add(buffer.data(), x.node()->grad_buffer().data(),
                              batches, rows_t, cols_f, in, i - pt, j - pf);
        }
      }
    }
  });
}

Tensor permute_tensor(const Tensor& x, const std::vector<int>& perm) {
  const int rank = x.rank();
  if (static_cast<int>(perm.size()) != rank) {
    throw ShapeError("permute: rank mismatch");
  }
  std::vector<int> seen(static_cast<std::size_t>(rank), 0);
  for (int p : perm) {
    if (p < 0 || p >= rank || seen[static_cast<std::size_t>(p)]++) {
      throw ShapeError("permute: invalid permutation");
    }
  }
  std::vector<std::int64_t> in_strides(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i) {
    in_strides[static_cast<std::size_t>(i)] =
        in_strides[static_cast<std::size_t>(i + 1)] * x.dim(i + 1);
  }
  Shape out_shape(static_cast<std::size_t>(rank));
  std::vector<std::int64_t> strides(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    out_shape[static_cast<std::size_t>(i)] = x.dim(perm[static_cast<std::size_t>(i)]);
    strides[static_cast<std::size_t>(i)] =
        in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  Tensor out(out_shape);
  if (out.size() == 0) return out;
  const std::int64_t inner = out_shape.back();
  const std::int64_t inner_stride = strides.back();
  std::vector<std::int64_t> index(static_cast<std::size_t>(rank), 0);
  const Real* src = x.data();
  Real* dst = out.data();
  const std::int64_t outer = out.size() / inner;
  for (std::int64_t o = 0; o < outer; ++o) {
    std::int64_t base = 0;
    for (int i = 0; i < rank - 1; ++i) {
      base += index[static_cast<std::size_t>(i)] * strides[static_cast<std::size_t>(i)];
    }
    for (std::int64_t c = 0; c < inner; ++c) *dst++ = src[base + c * inner_stride];
    for (int i = rank - 2; i >= 0; --i) {
      auto& idx = index[static_cast<std::size_t>(i)];
      if (++idx < out_shape[static_cast<std::size_t>(i)]) break;
      idx = 0;
    }
  }
  return out;
}

Var permute(const Var& x, const std::vector<int>& perm) {
  Tensor out = permute_tensor(x.value(), perm);
  std::vector<int> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }
  return make_result(std::move(out), {x}, [x, inverse](Node& self) {
    x.node()->grad_buffer().add_(permute_tensor(self.grad, inverse));
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [x](Node& self) {
    x.node()->grad_buffer().add_(self.grad);
  });
}

Var swiglu_gate(const Var& x) {
  const std::int64_t width = last_dim(x.value());
  if (width % 2 != 0) throw ShapeError("swiglu_gate: odd channel count");
  const std::int64_t half = width / 2;
  const std::int64_t rows = x.value().size() / width;
  Shape out_shape = x.shape();
  out_shape.back() = half;
  Tensor out(out_shape);
  const Real* in = x.value().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* a = in + r * width;
    const Real* g = a + half;
    Real* y = out.data() + r * half;
    for (std::int64_t c = 0; c < half; ++c) y[c] = a[c] * g[c] * sigmoid(g[c]);
  }
  return make_result(std::move(out), {x}, [x, rows, half, width](Node& self) {
    const Real* in = x.value().data();
    Real* dx = x.node()->grad_buffer().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const Real* a = in + r * width;
      const Real* g = a + half;
      const Real* dy = self.grad.data() + r * half;
      Real* da = dx + r * width;
      Real* dg = da + half;
      for (std::int64_t c = 0; c < half; ++c) {
        const Real s = sigmoid(g[c]);
        da[c] += dy[c] * g[c] * s;
        dg[c] += dy[c] * a[c] * s * (1 + g[c] * (1 - s));
      }
    }
  });
}

Var rms_group_norm(const Var& x, const Var& gamma, int groups, Real eps) {
  const std::int64_t width = last_dim(x.value());
  if (groups <= 0 || width % groups != 0) {
    throw ShapeError("rms_group_norm: groups must divide channel count");
  }
  expect_shape(gamma.value(), {width}, "rms_group_norm gamma");
  const std::int64_t group_size = width / groups;
  const std::int64_t rows = x.value().size() / width;
  Tensor out(x.shape());
  Tensor inv_rms({rows, groups});
  const Real* in = x.value().data();
  const Real* gm = gamma.value().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const Real* v = in + r * width + g * group_size;
      Real ms = 0;
      for (std::int64_t c = 0; c < group_size; ++c) ms += v[c] * v[c];
      ms /= static_cast<Real>(group_size);
      const Real inv = 1 / std::sqrt(ms + eps);
      inv_rms[r * groups + g] = inv;
      Real* y = out.data() + r * width + g * group_size;
      for (std::int64_t c = 0; c < group_size; ++c) {
        y[c] = v[c] * inv * gm[g * group_size + c];
      }
    }
  }
  return make_result(
      std::move(out), {x, gamma},
      [x, gamma, inv_rms = std::move(inv_rms), rows, groups, group_size,
       width](Node& self) {
        const Real* in = x.value().data();
        const Real* gm = gamma.value().data();
        const Real* dy = self.grad.data();
        Real* dgamma =
            gamma.requires_grad() ? gamma.node()->grad_buffer().data() : nullptr;
        Real* dx = x.requires_grad() ? x.node()->grad_buffer().data() : nullptr;
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t g = 0; g < groups; ++g) {
            const std::int64_t off = r * width + g * group_size;
            const Real inv = inv_rms[r * groups + g];
            Real dot = 0;
            for (std::int64_t c = 0; c < group_size; ++c) {
              const Real xhat = in[off + c] * inv;
              const Real dxhat = dy[off + c] * gm[g * group_size + c];
              if (dgamma) dgamma[g * group_size + c] += dy[off + c] * xhat;
              dot += dxhat * xhat;
            }
            if (!dx) continue;
            dot /= static_cast<Real>(group_size);
            for (std::int64_t c = 0; c < group_size; ++c) {
              const Real xhat = in[off + c] * inv;
              const Real dxhat = dy[off + c] * gm[g * group_size + c];
              dx[off + c] += inv * (dxhat - xhat * dot);
            }
          }
        }
      });
}

Var global_layer_norm(const Var& x, const Var& gamma, const Var& beta,
                      Real eps) {
  const Tensor& xv = x.value();
  const std::int64_t width = last_dim(xv);
  expect_shape(gamma.value(), {width}, "global_layer_norm gamma");
  expect_shape(beta.value(), {width}, "global_layer_norm beta");
  const std::int64_t items = xv.dim(0);
  const std::int64_t per_item = xv.size() / items;
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  std::vector<Real> inv_std(static_cast<std::size_t>(items));
  for (std::int64_t b = 0; b < items; ++b) {
    const Real* v = xv.data() + b * per_item;
    Real mean = 0;
    for (std::int64_t i = 0; i < per_item; ++i) mean += v[i];
    mean /= static_cast<Real>(per_item);
    Real var = 0;
    for (std::int64_t i = 0; i < per_item; ++i) var += (v[i] - mean) * (v[i] - mean);
    var /= static_cast<Real>(per_item);
    const Real inv = 1 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(b)] = inv;
    for (std::int64_t i = 0; i < per_item; ++i) {
      const Real h = (v[i] - mean) * inv;
      const std::int64_t c = i % width;
      xhat[b * per_item + i] = h;
      out[b * per_item + i] = h * gamma.value()[c] + beta.value()[c];
    }
  }
  return make_result(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std),
       items, per_item, width](Node& self) {
        const Real* dy = self.grad.data();
        if (gamma.requires_grad() || beta.requires_grad()) {
          Tensor& dg = gamma.node()->grad_buffer();
          Tensor& db = beta.node()->grad_buffer();
          for (std::int64_t i = 0; i < items * per_item; ++i) {
            const std::int64_t c = i % width;
            dg[c] += dy[i] * xhat[i];
            db[c] += dy[i];
          }
        }
        if (!x.requires_grad()) return;
        Real* dx = x.node()->grad_buffer().data();
        for (std::int64_t b = 0; b < items; ++b) {
          Real mean_d = 0, mean_dx = 0;
          for (std::int64_t i = 0; i < per_item; ++i) {
            const std::int64_t k = b * per_item + i;
            const Real d = dy[k] * gamma.value()[i % width];
            mean_d += d;
            mean_dx += d * xhat[k];
          }
          mean_d /= static_cast<Real>(per_item);
          mean_dx /= static_cast<Real>(per_item);
          const Real inv = inv_std[static_cast<std::size_t>(b)];
          for (std::int64_t i = 0; i < per_item; ++i) {
            const std::int64_t k = b * per_item + i;
            const Real d = dy[k] * gamma.value()[i % width];
            dx[k] += inv * (d - mean_d - xhat[k] * mean_dx);
          }
        }
      });
}

void apply_rope(Real* vec, int head_dim, std::int64_t pos, int direction) {
  for (int i = 0; i < head_dim / 2; ++i) {
    const Real inv_freq =
        std::pow(Real(10000), -Real(2 * i) / static_cast<Real>(head_dim));
    const Real angle = static_cast<Real>(pos) * inv_freq;
    const Real c = std::cos(angle);
    const Real s = direction * std::sin(angle);
    const Real a = vec[2 * i], b = vec[2 * i + 1];
    vec[2 * i] = a * c - b * s;
    vec[2 * i + 1] = a * s + b * c;
  }
}

namespace {

struct AttentionShape {
  std::int64_t batches, seq, channels;
  int heads, head_dim;
};

AttentionShape attention_shape(const Tensor& qkv, int heads) {
  if (qkv.rank() != 3 || qkv.dim(2) % 3 != 0) {
    throw ShapeError("attention: expected [B, S, 3C], got " +
                     shape_string(qkv.shape()));
  }
  const std::int64_t channels = qkv.dim(2) / 3;
  if (heads <= 0 || channels % heads != 0) {
    throw ShapeError("attention: heads must divide channels");
  }
  return {qkv.dim(0), qkv.dim(1), channels, heads,
          static_cast<int>(channels / heads)};
}

// Copies one head's q, k, v into contiguous [S, dh] blocks, rotating q and k.
void load_head(const Tensor& qkv, const AttentionShape& sh, std::int64_t b,
               int h, bool rope, Real* q, Real* k, Real* v) {
  const std::int64_t dh = sh.head_dim;
  for (std::int64_t s = 0; s < sh.seq; ++s) {
    const Real* row = qkv.data() + (b * sh.seq + s) * 3 * sh.channels + h * dh;
    std::copy(row, row + dh, q + s * dh);
    std::copy(row + sh.channels, row + sh.channels + dh, k + s * dh);
    std::copy(row + 2 * sh.channels, row + 2 * sh.channels + dh, v + s * dh);
    if (rope) {
      apply_rope(q + s * dh, sh.head_dim, s, +1);
      apply_rope(k + s * dh, sh.head_dim, s, +1);
    }
  }
}

void softmax_rows(Mat& scores) {
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const Real mx = scores.row(r).maxCoeff();
    Real sum = 0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      const Real e = std::exp(scores(r, c) - mx);
      scores(r, c) = e;
      sum += e;
    }
    scores.row(r) /= sum;
  }
}

}  // namespace

Tensor attention_weights(const Tensor& qkv, int heads, bool rope) {
  const AttentionShape sh = attention_shape(qkv, heads);
  const Real scale_factor = 1 / std::sqrt(static_cast<Real>(sh.head_dim));
  Tensor out({sh.batches, heads, sh.seq, sh.seq});
  Mat q(sh.seq, sh.head_dim), k(sh.seq, sh.head_dim), v(sh.seq, sh.head_dim);
  for (std::int64_t b = 0; b < sh.batches; ++b) {
    for (int h = 0; h < heads; ++h) {
      load_head(qkv, sh, b, h, rope, q.data(), k.data(), v.data());
      Mat p = (q * k.transpose()) * scale_factor;
      softmax_rows(p);
      std::copy(p.data(), p.data() + p.size(),
                out.data() + (b * heads + h) * sh.seq * sh.seq);
    }
  }
  return out;
}

Var attention_core(const Var& qkv, int heads, bool rope) {
  const AttentionShape sh = attention_shape(qkv.value(), heads);
  const std::int64_t seq = sh.seq, dh = sh.head_dim;
  const Real scale_factor = 1 / std::sqrt(static_cast<Real>(dh));
  const std::int64_t head_count = sh.batches * heads;
  // Saved per (b, h): rotated q, k, raw v and the probability matrix.
  Tensor saved_q({head_count, seq, dh}), saved_k({head_count, seq, dh});
  Tensor saved_v({head_count, seq, dh}), saved_p({head_count, seq, seq});
  Tensor out({sh.batches, seq, sh.channels});
  for (std::int64_t b = 0; b < sh.batches; ++b) {
    for (int h = 0; h < heads; ++h) {
      const std::int64_t idx = b * heads + h;
      Real* q = saved_q.data() + idx * seq * dh;
      Real* k = saved_k.data() + idx * seq * dh;
      Real* v = saved_v.data() + idx * seq * dh;
      load_head(qkv.value(), sh, b, h, rope, q, k, v);
      MatMap p(saved_p.data() + idx * seq * seq, seq, seq);
      Mat scores = (ConstMatMap(q, seq, dh) * ConstMatMap(k, seq, dh).transpose()) *
                   scale_factor;
      softmax_rows(scores);
      p = scores;
      Mat o = p * ConstMatMap(v, seq, dh);
      for (std::int64_t s = 0; s < seq; ++s) {
        std::copy(o.row(s).data(), o.row(s).data() + dh,
                  out.data() + (b * seq + s) * sh.channels + h * dh);
      }
    }
  }
  return make_result(
      std::move(out), {qkv},
      [qkv, sh, rope, scale_factor, saved_q = std::move(saved_q),
       saved_k = std::move(saved_k), saved_v = std::move(saved_v),
       saved_p = std::move(saved_p)](Node& self) {
        const std::int64_t seq = sh.seq, dh = sh.head_dim;
        Real* dqkv = qkv.node()->grad_buffer().data();
        Mat d_out(seq, dh);
        for (std::int64_t b = 0; b < sh.batches; ++b) {
          for (int h = 0; h < sh.heads; ++h) {
            const std::int64_t idx = b * sh.heads + h;
            for (std::int64_t s = 0; s < seq; ++s) {
              const Real* g = self.grad.data() + (b * seq + s) * sh.channels + h * dh;
              std::copy(g, g + dh, d_out.row(s).data());
            }
            ConstMatMap q(saved_q.data() + idx * seq * dh, seq, dh);
            ConstMatMap k(saved_k.data() + idx * seq * dh, seq, dh);
            ConstMatMap v(saved_v.data() + idx * seq * dh, seq, dh);
            ConstMatMap p(saved_p.data() + idx * seq * seq, seq, seq);
            Mat dv = p.transpose() * d_out;
            Mat dp = d_out * v.transpose();
            Mat ds(seq, seq);
            for (std::int64_t r = 0; r < seq; ++r) {
              const Real dot = p.row(r).dot(dp.row(r));
              for (std::int64_t c = 0; c < seq; ++c) {
                ds(r, c) = p(r, c) * (dp(r, c) - dot);
              }
            }
            Mat dq = (ds * k) * scale_factor;
            Mat dk = (ds.transpose() * q) * scale_factor;
            for (std::int64_t s = 0; s < seq; ++s) {
              if (rope) {
                apply_rope(dq.row(s).data(), sh.head_dim, s, -1);
                apply_rope(dk.row(s).data(), sh.head_dim, s, -1);
              }
              Real* row = dqkv + (b * seq + s) * 3 * sh.channels + h * dh;
              for (std::int64_t c = 0; c < dh; ++c) {
                row[c] += dq(s, c);
                row[sh.channels + c] += dk(s, c);
                row[2 * sh.channels + c] += dv(s, c);
              }
            }
          }
        }
      });
}

Var istft_batch(const Var& spec, const StftEngine& engine,
                std::int64_t length) {
  const Tensor& sv = spec.value();
  if (sv.rank() != 4 || sv.dim(2) != engine.config().bins() || sv.dim(3) != 2) {
    throw ShapeError("istft_batch: expected [J, T, " +
                     std::to_string(engine.config().bins()) + ", 2], got " +
                     shape_string(sv.shape()));
  }
  const std::int64_t count = sv.dim(0), frames = sv.dim(1);
  const std::int64_t per = frames * sv.dim(2) * 2;
  Tensor out({count, length});
  for (std::int64_t j = 0; j < count; ++j) {
    std::vector<Real> wave = engine.synthesize(sv.data() + j * per, frames, length);
    std::copy(wave.begin(), wave.end(), out.data() + j * length);
  }
  return make_result(std::move(out), {spec},
                     [spec, engine, count, frames, per, length](Node& self) {
    Real* dspec = spec.node()->grad_buffer().data();
    for (std::int64_t j = 0; j < count; ++j) {
      engine.synthesize_adjoint(
          std::span<const Real>(self.grad.data() + j * length,
                                static_cast<std::size_t>(length)),
          frames, dspec + j * per);
    }
  });
}

}  // namespace scalesep
