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

#include "scalesep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scalesep/errors.hpp"

namespace scalesep {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill)
    : shape_(std::move(shape)),
      data_(static_cast<std::size_t>(shape_size(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_size(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis out of range for shape " + shape_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                     shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add_(const Tensor& other, Real scale) {
  if (other.size() != size()) {
    throw ShapeError("add_: " + shape_string(shape_) + " vs " +
                     shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](Real v) { return std::isfinite(v); });
}

Real Tensor::max_abs() const {
  Real m = 0;
  for (Real v : data_) m = std::max(m, std::abs(v));
  return m;
}

void expect_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " +
                     shape_string(expected) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace scalesep
