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
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace scalesep {

using Real = double;
using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& shape);

// Fixed 64-byte alignment keeps vectorized reductions independent of where
// the heap happens to place a buffer, so results are reproducible run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

using Storage = std::vector<Real, AlignedAllocator<Real>>;
std::string shape_string(const Shape& shape);

// Dense row-major tensor of Real. Feature maps inside the model are stored
// channel-last, e.g. a D x T x F feature is laid out as [T, F, D].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0);
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  Real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  Real operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  // Same data, new shape with the same element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(Real value);
  void add_(const Tensor& other, Real scale = 1);
  bool all_finite() const;
  Real max_abs() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Storage data_;
};

// Throws ShapeError when `t` does not have exactly `expected`.
void expect_shape(const Tensor& t, const Shape& expected, const char* what);

}  // namespace scalesep
