// Copyright 2026 The tsq Authors. All Rights Reserved.
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

#include "tsq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tsq/errors.hpp"

namespace tsq {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range");
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::validate_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw ValidationError("non-finite value at flat index " + std::to_string(i));
    }
  }
}

void TensorBundle::insert(const std::string& name, Tensor t) { tensors_.insert_or_assign(name, std::move(t)); }

bool TensorBundle::contains(const std::string& name) const { return tensors_.count(name) != 0; }

const Tensor& TensorBundle::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("missing tensor: " + name);
  return it->second;
}

const Tensor* TensorBundle::find(const std::string& name) const {
  auto it = tensors_.find(name);
  return it == tensors_.end() ? nullptr : &it->second;
}

std::vector<std::string> TensorBundle::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, t] : tensors_) out.push_back(name);
  return out;
}

void TensorBundle::validate() const {
  const std::string suffix = kGradSuffix;
  for (const auto& [name, t] : tensors_) {
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    const auto base = name.substr(0, name.size() - suffix.size());
    const Tensor* b = find(base);
    if (b && b->shape() != t.shape()) {
      throw ShapeError("gradient " + name + " has shape " + shape_to_string(t.shape()) + " but base has " +
                       shape_to_string(b->shape()));
    }
  }
}

float abs_max(std::span<const float> values) {
  float m = 0.0f;
  for (float v : values) m = std::max(m, std::fabs(v));
  return m;
}

SliceStats elementwise_stats(const Tensor& t, std::optional<std::size_t> axis) {
  if (t.size() == 0) throw DataError("elementwise_stats on an empty tensor");
  SliceStats s;
  if (!axis) {
    auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
    s.min.push_back(*lo);
    s.max.push_back(*hi);
    s.abs_max.push_back(std::max(std::fabs(*lo), std::fabs(*hi)));
    return s;
  }
  if (*axis >= t.rank()) {
    throw DataError("axis " + std::to_string(*axis) + " out of range for rank " + std::to_string(t.rank()));
  }
  const auto& shape = t.shape();
  const std::size_t channels = shape[*axis];
  std::size_t inner = 1;
  for (std::size_t i = *axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t outer = t.size() / (channels * inner);

  s.min.assign(channels, std::numeric_limits<float>::infinity());
  s.max.assign(channels, -std::numeric_limits<float>::infinity());
  auto data = t.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float* row = data.data() + (o * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        s.min[c] = std::min(s.min[c], row[i]);
        s.max[c] = std::max(s.max[c], row[i]);
      }
    }
  }
  s.abs_max.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) s.abs_max[c] = std::max(std::fabs(s.min[c]), std::fabs(s.max[c]));
  return s;
}

}  // namespace tsq
