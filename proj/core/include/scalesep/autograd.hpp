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

#include <functional>
#include <memory>
#include <vector>

#include "scalesep/tensor.hpp"

namespace scalesep {

// One vertex of the reverse-mode tape. Leaves are parameters or constants;
// interior nodes carry a closure that pushes `grad` into their parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Allocates a zero gradient on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  // Empty tensor until backward reaches this node.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Records an op result. When gradients are disabled or no parent needs a
// gradient the closure is dropped and a constant is returned.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn);

// Runs reverse accumulation from a scalar root, seeding d(root) = seed.
// Interior nodes release their closures afterwards; leaf gradients
// accumulate across calls until zero_grad.
void backward(const Var& root, Real seed = 1);

bool grad_enabled();

// Scoped switch for the calling thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace scalesep
