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

#include "mpmd/tensor.h"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpmd/errors.h"

namespace mpmd {

int64_t TensorSpec::elements() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

bool TensorSpec::valid() const {
  if (elem_bytes <= 0) return false;
  return std::all_of(dims.begin(), dims.end(), [](int64_t d) { return d > 0; });
}

std::string TensorSpec::ToString() const {
  return fmt::format("({})x{}B", fmt::join(dims, ","), elem_bytes);
}

namespace {

size_t ElementCount(const std::vector<int64_t>& dims) {
  int64_t n = 1;
  for (int64_t d : dims) {
    if (d <= 0) throw ValidationError(fmt::format("non-positive tensor dimension {}", d));
    n *= d;
  }
  return static_cast<size_t>(n);
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> dims)
    : dims_(std::move(dims)), data_(ElementCount(dims_), 0.0) {}

Tensor::Tensor(std::vector<int64_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != ElementCount(dims_)) {
    throw ValidationError(fmt::format("tensor data length {} does not match dims ({})",
                                      data_.size(), fmt::join(dims_, ",")));
  }
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (dims_ != other.dims_) {
    throw Error(fmt::format("shape mismatch in accumulate: ({}) vs ({})", fmt::join(dims_, ","),
                            fmt::join(other.dims_, ",")));
  }
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out += b;
  return out;
}

Tensor Tensor::SliceRows(int64_t begin, int64_t end) const {
  if (dims_.empty() || begin < 0 || end > dims_[0] || begin >= end) {
    throw Error(
        fmt::format("invalid row slice [{}, {}) of ({})", begin, end, fmt::join(dims_, ",")));
  }
  std::vector<int64_t> dims = dims_;
  dims[0] = end - begin;
  const int64_t row = size() / dims_[0];
  std::vector<double> data(data_.begin() + begin * row, data_.begin() + end * row);
  return Tensor(std::move(dims), std::move(data));
}

double Tensor::MaxAbs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double RelativeError(const Tensor& actual, const Tensor& expected) {
  if (actual.dims() != expected.dims()) return std::numeric_limits<double>::infinity();
  double diff = 0.0;
  for (int64_t i = 0; i < actual.size(); ++i) {
    diff = std::max(diff, std::abs(actual[i] - expected[i]));
  }
  const double scale = std::max(expected.MaxAbs(), std::numeric_limits<double>::min());
  return diff / scale;
}

}  // namespace mpmd
