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

#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "scalesep/errors.hpp"
#include "scalesep/ops.hpp"

namespace scalesep {
namespace {

using testing::random_tensor;

// loss = <weights, op(inputs)>; compares backward() against central
// differences entry by entry.
void check_grad(const std::function<Var(const std::vector<Var>&)>& op,
                std::vector<Tensor> inputs, std::uint64_t seed, Real tol = 1e-6) {
  std::vector<Var> vars;
  for (auto& t : inputs) vars.push_back(parameter(t));
  const Var out = op(vars);
  const Tensor weights = random_tensor(seed, out.shape());
  auto loss_value = [&]() {
    NoGradGuard g;
    return testing::dot(op(vars).value(), weights);
  };
  Var weighted = make_result(Tensor({1}, testing::dot(out.value(), weights)), {out},
                             [out, weights](Node& self) {
                               out.node()->grad_buffer().add_(weights, self.grad[0]);
                             });
  backward(weighted);
  const Real h = 1e-6;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const Tensor analytic = vars[k].grad().empty() ? Tensor::zeros_like(vars[k].value())
                                                   : vars[k].grad();
    for (std::int64_t i = 0; i < analytic.size(); ++i) {
      Tensor& p = vars[k].mutable_value();
      const Real saved = p[i];
      p[i] = saved + h;
      const Real plus = loss_value();
      p[i] = saved - h;
      const Real minus = loss_value();
      p[i] = saved;
      const Real fd = (plus - minus) / (2 * h);
      EXPECT_NEAR(analytic[i], fd, tol * std::max<Real>(1, std::abs(fd)))
          << "input " << k << " entry " << i;
    }
  }
}

TEST(Tensor, ShapeAndReshape) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.dim(-1), 3);
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.dim(0), 3);
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), ShapeError);
}

TEST(Tensor, FiniteAndMaxAbs) {
  Tensor t({3}, std::vector<Real>{1, -4, 2});
  EXPECT_TRUE(t.all_finite());
  EXPECT_DOUBLE_EQ(t.max_abs(), 4);
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Autograd, NoGradGuardDropsTape) {
  Var p = parameter(Tensor({2}, 1.0));
  {
    NoGradGuard g;
    EXPECT_FALSE(add(p, p).requires_grad());
  }
  EXPECT_TRUE(add(p, p).requires_grad());
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  Var p = parameter(Tensor({1}, 3.0));
  Var y = add(scale(p, 2), scale(p, 5));
  backward(y);
  EXPECT_DOUBLE_EQ(p.grad()[0], 7.0);
}

TEST(Autograd, BackwardNeedsScalar) {
  Var p = parameter(Tensor({2}, 1.0));
  EXPECT_THROW(backward(scale(p, 2)), ShapeError);
}

TEST(OpsGrad, Linear) {
  check_grad([](const auto& v) { return linear(v[0], v[1], v[2]); },
             {random_tensor(1, {2, 3, 4}), random_tensor(2, {4, 5}), random_tensor(3, {5})}, 4);
}

TEST(OpsGrad, ConvSeq) {
  for (int pad : {0, 1, 2}) {
    check_grad([pad](const auto& v) { return conv_seq(v[0], v[1], v[2], pad); },
               {random_tensor(5, {2, 6, 3}), random_tensor(6, {3, 3, 4}), random_tensor(7, {4})},
               8);
  }
}

TEST(OpsGrad, ConvSeqCircular) {
  for (auto [seq, pad] : {std::pair{6, 1}, std::pair{2, 1}, std::pair{2, 2}}) {
    check_grad([pad](const auto& v) { return conv_seq(v[0], v[1], v[2], pad, true); },
               {random_tensor(5, {2, seq, 3}), random_tensor(6, {4, 3, 2}), random_tensor(7, {2})},
               9);
  }
}

TEST(OpsGrad, Conv2dSame) {
  check_grad([](const auto& v) { return conv2d_same(v[0], v[1], v[2]); },
             {random_tensor(9, {2, 4, 5, 2}), random_tensor(10, {3, 3, 2, 3}),
              random_tensor(11, {3})},
             12);
}

TEST(OpsGrad, PermuteReshape) {
  check_grad([](const auto& v) { return reshape(permute(v[0], {2, 0, 1, 3}), {6, 4, 2}); },
             {random_tensor(13, {2, 3, 4, 2})}, 14);
}

TEST(OpsGrad, SwigluGate) {
  check_grad([](const auto& v) { return swiglu_gate(v[0]); }, {random_tensor(15, {3, 8})}, 16);
}

TEST(OpsGrad, RmsGroupNorm) {
  check_grad([](const auto& v) { return rms_group_norm(v[0], v[1], 2, 1e-5); },
             {random_tensor(17, {3, 5, 4}), random_tensor(18, {4})}, 19);
}

TEST(OpsGrad, GlobalLayerNorm) {
  check_grad([](const auto& v) { return global_layer_norm(v[0], v[1], v[2], 1e-8); },
             {random_tensor(20, {2, 3, 4, 3}), random_tensor(21, {3}), random_tensor(22, {3})},
             23);
}

TEST(OpsGrad, AttentionWithAndWithoutRope) {
  for (bool rope : {false, true}) {
    check_grad([rope](const auto& v) { return attention_core(v[0], 2, rope); },
               {random_tensor(24, {2, 5, 12}, 0.7)}, 25, 1e-5);
  }
}

TEST(OpsGrad, IstftBatch) {
  StftConfig cfg;
  cfg.window_size = 16;
  cfg.hop = 8;
  StftEngine engine(cfg);
  const std::int64_t length = 40;
  check_grad([&](const auto& v) { return istft_batch(v[0], engine, length); },
             {random_tensor(26, {2, cfg.frames(length), cfg.bins(), 2})}, 27);
}

TEST(Ops, LinearMatchesLoop) {
  const Tensor x = random_tensor(30, {2, 3});
  const Tensor w = random_tensor(31, {3, 2});
  const Tensor y = linear(constant(x), constant(w)).value();
  for (int r = 0; r < 2; ++r) {
    for (int o = 0; o < 2; ++o) {
      Real s = 0;
      for (int c = 0; c < 3; ++c) s += x[r * 3 + c] * w[c * 2 + o];
      EXPECT_NEAR(y[r * 2 + o], s, 1e-12);
    }
  }
}

TEST(Ops, ConvSeqMatchesDefinition) {
  const Tensor x = random_tensor(32, {1, 5, 2});
  const Tensor w = random_tensor(33, {3, 2, 1});
  const Tensor b({1}, 0.25);
  const int pad = 1;
  const Tensor y = conv_seq(constant(x), constant(w), constant(b), pad).value();
  for (int s = 0; s < 5; ++s) {
    Real acc = 0.25;
    for (int k = 0; k < 3; ++k) {
      const int src = s + k - pad;
      if (src < 0 || src >= 5) continue;
      for (int c = 0; c < 2; ++c) acc += x[src * 2 + c] * w[k * 2 + c];
    }
    EXPECT_NEAR(y[s], acc, 1e-12);
  }
}

TEST(Ops, CircularConvSeqWraps) {
  const Tensor x = random_tensor(35, {2, 3, 2});
  const Tensor w = random_tensor(36, {4, 2, 1});
  const int pad = 1;
  const Tensor y = conv_seq(constant(x), constant(w), Var(), pad, true).value();
  for (int b = 0; b < 2; ++b) {
    for (int s = 0; s < 3; ++s) {
      Real acc = 0;
      for (int k = 0; k < 4; ++k) {
        const int src = ((s + k - pad) % 3 + 3) % 3;
        for (int c = 0; c < 2; ++c) acc += x[(b * 3 + src) * 2 + c] * w[k * 2 + c];
      }
      EXPECT_NEAR(y[b * 3 + s], acc, 1e-12);
    }
  }
}

TEST(Ops, AttentionRowsAreDistributions) {
  const Tensor qkv = random_tensor(34, {1, 6, 12});
  const Tensor p = attention_weights(qkv, 2, true);
  ASSERT_EQ(p.shape(), (Shape{1, 2, 6, 6}));
  for (int row = 0; row < 12; ++row) {
    Real s = 0;
    for (int c = 0; c < 6; ++c) {
      EXPECT_GE(p[row * 6 + c], 0);
      s += p[row * 6 + c];
    }
    EXPECT_NEAR(s, 1, 1e-12);
  }
}

TEST(Ops, RopeIsOrthogonalAndRelative) {
  // Rotation preserves norms, and q.k depends only on the position gap.
  const Tensor a = random_tensor(35, {8});
  const Tensor b = random_tensor(36, {8});
  auto rotated_dot = [&](std::int64_t pa, std::int64_t pb) {
    Tensor x = a, y = b;
    apply_rope(x.data(), 8, pa, 1);
    apply_rope(y.data(), 8, pb, 1);
    return testing::dot(x, y);
  };
  EXPECT_NEAR(rotated_dot(3, 1), rotated_dot(7, 5), 1e-10);
  Tensor x = a;
  apply_rope(x.data(), 8, 11, 1);
  EXPECT_NEAR(testing::dot(x, x), testing::dot(a, a), 1e-10);
  apply_rope(x.data(), 8, 11, -1);
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(x[i], a[i], 1e-12);
}

TEST(Ops, GlobalLayerNormStatistics) {
  const Tensor x = random_tensor(37, {2, 3, 4, 5}, 3.0);
  const Var y = global_layer_norm(constant(x), constant(Tensor({5}, 1.0)),
                                  constant(Tensor({5}, 0.0)), 1e-8);
  for (int b = 0; b < 2; ++b) {
    Real mean = 0, sq = 0;
    for (int i = 0; i < 60; ++i) mean += y.value()[b * 60 + i];
    mean /= 60;
    for (int i = 0; i < 60; ++i) sq += std::pow(y.value()[b * 60 + i] - mean, 2);
    EXPECT_NEAR(mean, 0, 1e-10);
    EXPECT_NEAR(sq / 60, 1, 1e-6);
  }
}

TEST(Ops, ShapeErrors) {
  EXPECT_THROW(add(constant(Tensor({2})), constant(Tensor({3}))), ShapeError);
  EXPECT_THROW(linear(constant(Tensor({2, 3})), constant(Tensor({4, 2}))), ShapeError);
  EXPECT_THROW(swiglu_gate(constant(Tensor({2, 3}))), ShapeError);
}

}  // namespace
}  // namespace scalesep
