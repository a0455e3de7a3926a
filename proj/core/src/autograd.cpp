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

#include "scalesep/autograd.hpp"

#include <unordered_set>

#include "scalesep/errors.hpp"

namespace scalesep {
namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  }
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(node));
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return Var(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (auto& p : parents) node->parents.push_back(p.node());
  node->backward_fn = std::move(backward_fn);
  return Var(std::move(node));
}

void backward(const Var& root, Real seed) {
  if (!root.defined()) throw Error("backward on undefined variable");
  if (root.value().size() != 1) {
    throw ShapeError("backward root must be a scalar, got " +
                     shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a valid topological order.
  // Owning refs: releasing a closure may drop the last other reference.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const std::shared_ptr<Node>& parent = node->parents[next++];
      if (parent->requires_grad && !visited.count(parent.get())) {
        visited.insert(parent.get());
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = it->get();
    if (!node->backward_fn) continue;
    if (!node->grad.empty()) node->backward_fn(*node);
    node->backward_fn = nullptr;
    node->parents.clear();
    node->grad = Tensor();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace scalesep
