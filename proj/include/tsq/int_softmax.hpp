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

#include <cstdint>
#include <span>
#include <vector>

namespace tsq {

/// Integer-only softmax.
///
/// exp(x) for x <= 0 is decomposed as x = -ln2 * z + p with integer z >= 0
/// and p in (-ln2, 0], so exp(x) = exp(p) * 2^-z. exp(p) is approximated by
/// the second-order polynomial a (p + b)^2 + c evaluated in fixed point, and
/// the 2^-z factor is a right shift. After the input scale is converted to
/// fixed point once, only integer multiply, add and shift are used.
struct IntSoftmaxConfig {
  /// Second-order fit of exp on (-ln2, 0] (I-BERT coefficients).
  double coef_a = 0.3585;
  double coef_b = 1.353;
  double coef_c = 0.344;
  /// Fractional bits of the fixed-point working format.
  int frac_bits = 30;
  /// Probability codes are unsigned with this many bits; scale 2^-output_bits.
  int output_bits = 16;

  void validate() const;
};

/// Fixed-point constants derived from a config.
struct IntExpConstants {
  std::int64_t ln2 = 0;
  std::int64_t b = 0;
  std::int64_t a = 0;
  std::int64_t c = 0;
  int frac_bits = 30;

  static IntExpConstants from(const IntSoftmaxConfig& cfg);
};

struct IntExpResult {
  std::int64_t mantissa = 0;  // L(p) with frac_bits fractional bits
  int shift = 0;              // z

  /// mantissa >> shift, saturating to 0 for large shifts.
  std::int64_t value() const { return shift >= 63 ? 0 : mantissa >> shift; }
};

/// Input scale as a fixed-point integer with cfg.frac_bits fractional bits.
std::int64_t fixed_point_scale(double input_scale, int frac_bits);

/// exp(q * s_in) for q <= 0, with s_in already in fixed point.
/// Throws DataError for positive q.
IntExpResult int_exp(std::int64_t q, std::int64_t scale_fp, const IntExpConstants& k);
IntExpResult int_exp(std::int64_t q, double input_scale, const IntSoftmaxConfig& cfg = {});

/// Real value of an IntExpResult.
double int_exp_to_double(const IntExpResult& r, int frac_bits);

struct IntSoftmaxRow {
  std::vector<std::uint32_t> codes;
  double output_scale = 0.0;  // 2^-output_bits
};

/// Softmax of one row of integer logits with scale s_in. The row max is
/// subtracted in the integer domain, so adding a constant to every code
/// leaves the output unchanged. Throws DataError for an empty row.
IntSoftmaxRow int_softmax_row(std::span<const std::int32_t> codes, double input_scale,
                              const IntSoftmaxConfig& cfg = {});

/// Maximum relative error |int_exp - exp| / exp over `points` evenly spaced
/// inputs in [lo, 0].
struct IntExpToleranceReport {
  double max_relative_error = 0.0;
  double worst_input = 0.0;
  std::size_t points = 0;
};

IntExpToleranceReport int_exp_tolerance(double lo, std::size_t points, const IntSoftmaxConfig& cfg = {});

}  // namespace tsq
