/* Copyright 2026 The mpmdpp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef MPMD_TENSOR_H_
#define MPMD_TENSOR_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mpmd {

// Shape plus element width. Empty dims denote a scalar.
struct TensorSpec {
  std::vector<int64_t> dims;
  int64_t elem_bytes = 8;

  int64_t elements() const;
  int64_t total_bytes() const { return elements() * elem_bytes; }
  int64_t rank() const { return static_cast<int64_t>(dims.size()); }
  bool valid() const;
  std::string ToString() const;

  bool operator==(const TensorSpec&) const = default;
};

// Dense row-major float64 tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> dims);
  Tensor(std::vector<int64_t> dims, std::vector<double> data);

  static Tensor Zeros(std::vector<int64_t> dims) { return Tensor(std::move(dims)); }
  static Tensor Scalar(double v) { return Tensor({}, {v}); }

  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t dim(size_t i) const { return dims_[i]; }
  int64_t rank() const { return static_cast<int64_t>(dims_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 2-D accessors; row-major.
  double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * dims_[1] + c)]; }
  double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * dims_[1] + c)]; }

  // Elementwise accumulate; shapes must match.
  Tensor& operator+=(const Tensor& other);

  // Rows [begin, end) along dimension 0.
  Tensor SliceRows(int64_t begin, int64_t end) const;

  double MaxAbs() const;

 private:
  std::vector<int64_t> dims_;
  std::vector<double> data_;
};

Tensor operator+(const Tensor& a, const Tensor& b);

// Normwise relative error max|a-b| / max(max|b|, tiny). Shapes must match.
double RelativeError(const Tensor& actual, const Tensor& expected);

}  // namespace mpmd

#endif  // MPMD_TENSOR_H_
