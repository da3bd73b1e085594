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

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tsq {

using Shape = std::vector<std::size_t>;

/// Product of dimensions; 1 for a rank-0 shape.
std::size_t element_count(const Shape& shape);

std::string shape_to_string(const Shape& shape);

/// Dense row-major float32 tensor. Values are immutable once constructed
/// through the validating constructor; mutable access exists for builders.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  /// Throws ShapeError when data.size() != element_count(shape).
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const float> data() const { return data_; }
  std::span<float> mutable_data() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  /// Same data, new shape with an equal element count.
  Tensor reshaped(Shape shape) const;

  /// Throws ValidationError if any value is NaN or infinite.
  void validate_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Named tensors. Gradient entries use the base name plus ".grad".
class TensorBundle {
 public:
  static constexpr const char* kGradSuffix = ".grad";

  void insert(const std::string& name, Tensor t);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  const Tensor* find(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return tensors_.size(); }

  /// Throws ShapeError if a gradient disagrees with its base tensor shape.
  void validate() const;

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

 private:
  std::map<std::string, Tensor> tensors_;
};

/// Per-slice min / max / abs-max.
struct SliceStats {
  std::vector<float> min;
  std::vector<float> max;
  std::vector<float> abs_max;
};

/// Reduces over every axis except `axis`; with no axis, reduces everything
/// into a single slice. Throws DataError for an out-of-range axis or an
/// empty tensor.
SliceStats elementwise_stats(const Tensor& t, std::optional<std::size_t> axis = std::nullopt);

float abs_max(std::span<const float> values);

}  // namespace tsq
