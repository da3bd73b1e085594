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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tsq/tensor.hpp"

namespace tsq {

/// Round half away from zero. Every codec in the library rounds this way.
inline double round_half_away(double v) { return std::round(v); }

/// Smallest / largest signed code for a b-bit symmetric grid.
constexpr std::int64_t code_min(int bits) { return -(std::int64_t{1} << (bits - 1)); }
constexpr std::int64_t code_max(int bits) { return (std::int64_t{1} << (bits - 1)) - 1; }

/// Symmetric uniform quantizer parameters. zero_point is always 0.
struct QuantParams {
  float scale = 1.0f;
  int zero_point = 0;
  int bits = 8;

  /// Throws ValidationError unless scale > 0 (finite), zero_point == 0 and
  /// 2 <= bits <= 16.
  void validate() const;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

struct QuantizedTensor {
  Shape shape;
  std::vector<std::int32_t> codes;
  QuantParams params;
};

/// s = |max(x)| / (2^b - 1); falls back to |min(x)| when max(x) <= 0 and to
/// 1 for an all-zero tensor. Throws DataError on an empty tensor.
QuantParams calibrate_uniform(const Tensor& t, int bits);

/// clamp(round(x / s), -2^(b-1), 2^(b-1) - 1).
std::int32_t quantize_value(float x, const QuantParams& p);
QuantizedTensor quantize(const Tensor& t, const QuantParams& p);

Tensor dequantize(const QuantizedTensor& q);

/// quantize followed by dequantize.
Tensor fake_quantize(const Tensor& t, const QuantParams& p);

/// Mean squared error. Throws ShapeError on mismatch.
double mse(const Tensor& a, const Tensor& b);
double mse(std::span<const float> a, std::span<const float> b);

/// 10 log10(sum ref^2 / sum (ref - test)^2). Returns +infinity when the two
/// are identical; throws NumericalError when the reference has zero energy.
double sqnr_db(const Tensor& ref, const Tensor& test);
double sqnr_db(std::span<const float> ref, std::span<const float> test);

}  // namespace tsq
