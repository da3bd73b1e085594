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

#include "tsq/int_softmax.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tsq/errors.hpp"

namespace tsq {

void IntSoftmaxConfig::validate() const {
  if (frac_bits < 8 || frac_bits > 30) throw ValidationError("integer softmax fractional bits must be in [8, 30]");
  if (output_bits < 2 || output_bits > 24) throw ValidationError("integer softmax output bits must be in [2, 24]");
  // The polynomial must stay positive on (-ln2, 0].
  const double lo = coef_a * (coef_b - std::numbers::ln2) * (coef_b - std::numbers::ln2) + coef_c;
  const double hi = coef_a * coef_b * coef_b + coef_c;
  if (!(coef_a > 0.0) || !(lo > 0.0) || !(hi > 0.0) || !(coef_b > std::numbers::ln2)) {
    throw ValidationError("integer softmax coefficients must give a positive increasing fit on (-ln2, 0]");
  }
}

IntExpConstants IntExpConstants::from(const IntSoftmaxConfig& cfg) {
  cfg.validate();
  const double one = std::ldexp(1.0, cfg.frac_bits);
  IntExpConstants k;
  k.frac_bits = cfg.frac_bits;
  k.ln2 = static_cast<std::int64_t>(std::llround(std::numbers::ln2 * one));
  k.a = static_cast<std::int64_t>(std::llround(cfg.coef_a * one));
  k.b = static_cast<std::int64_t>(std::llround(cfg.coef_b * one));
  k.c = static_cast<std::int64_t>(std::llround(cfg.coef_c * one));
  return k;
}

std::int64_t fixed_point_scale(double input_scale, int frac_bits) {
  if (!(input_scale > 0.0) || !std::isfinite(input_scale)) throw ValidationError("input scale must be positive");
  const double v = std::round(std::ldexp(input_scale, frac_bits));
  if (v < 1.0 || v > 0x1.0p40) throw ValidationError("input scale not representable in fixed point");
  return static_cast<std::int64_t>(v);
}

IntExpResult int_exp(std::int64_t q, std::int64_t scale_fp, const IntExpConstants& k) {
  if (q > 0) throw DataError("int_exp expects a non-positive input, got " + std::to_string(q));
  // |q| stays far below 2^23 for every supported bit width, so the product
  // fits comfortably in 64 bits.
  const std::int64_t neg_x = -q * scale_fp;
  const std::int64_t z = neg_x / k.ln2;
  const std::int64_t p = -(neg_x - z * k.ln2);  // (-ln2, 0]
  const std::int64_t t = p + k.b;
  const std::int64_t sq = (t * t) >> k.frac_bits;
  const std::int64_t poly = ((k.a * sq) >> k.frac_bits) + k.c;
  IntExpResult r;
  r.mantissa = poly;
  r.shift = static_cast<int>(std::min<std::int64_t>(z, 63));
  return r;
}

IntExpResult int_exp(std::int64_t q, double input_scale, const IntSoftmaxConfig& cfg) {
  const auto k = IntExpConstants::from(cfg);
  return int_exp(q, fixed_point_scale(input_scale, cfg.frac_bits), k);
}

double int_exp_to_double(const IntExpResult& r, int frac_bits) {
  return std::ldexp(static_cast<double>(r.value()), -frac_bits);
}

IntSoftmaxRow int_softmax_row(std::span<const std::int32_t> codes, double input_scale, const IntSoftmaxConfig& cfg) {
  if (codes.empty()) throw DataError("int_softmax_row on an empty row");
  const auto k = IntExpConstants::from(cfg);
  const std::int64_t scale_fp = fixed_point_scale(input_scale, cfg.frac_bits);
  const std::int64_t row_max = *std::max_element(codes.begin(), codes.end());

  std::vector<std::int64_t> e(codes.size());
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    e[i] = int_exp(static_cast<std::int64_t>(codes[i]) - row_max, scale_fp, k).value();
    sum += e[i];
  }
  // The max element contributes L(0) > 0, so sum > 0.
  IntSoftmaxRow out;
  out.output_scale = std::ldexp(1.0, -cfg.output_bits);
  out.codes.resize(codes.size());
  const std::int64_t top = (std::int64_t{1} << cfg.output_bits) - 1;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::int64_t num = (e[i] << cfg.output_bits) + sum / 2;
    out.codes[i] = static_cast<std::uint32_t>(std::min(num / sum, top));
  }
  return out;
}

IntExpToleranceReport int_exp_tolerance(double lo, std::size_t points, const IntSoftmaxConfig& cfg) {
  if (!(lo < 0.0) || points < 2) throw ValidationError("tolerance grid needs lo < 0 and at least two points");
  const auto k = IntExpConstants::from(cfg);
  // Grid x_i = -i * step; step is the input scale so q = -i exactly.
  const double step = -lo / static_cast<double>(points - 1);
  const std::int64_t scale_fp = fixed_point_scale(step, cfg.frac_bits);
  IntExpToleranceReport rep;
  rep.points = points;
  for (std::size_t i = 0; i < points; ++i) {
    const auto q = -static_cast<std::int64_t>(i);
    const double approx = int_exp_to_double(int_exp(q, scale_fp, k), cfg.frac_bits);
    const double x = static_cast<double>(q) * step;
    const double exact = std::exp(x);
    const double rel = std::fabs(approx - exact) / exact;
    if (rel > rep.max_relative_error) {
      rep.max_relative_error = rel;
      rep.worst_input = x;
    }
  }
  return rep;
}

}  // namespace tsq
