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

#include "tsq/quant.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "tsq/errors.hpp"

namespace tsq {

void QuantParams::validate() const {
  if (!(scale > 0.0f) || !std::isfinite(scale)) {
    throw ValidationError("quantization scale must be positive and finite, got " + std::to_string(scale));
  }
  if (zero_point != 0) throw ValidationError("zero_point must be 0 for symmetric quantization");
  if (bits < 2 || bits > 16) throw ValidationError("bit width must be in [2, 16], got " + std::to_string(bits));
}

QuantParams calibrate_uniform(const Tensor& t, int bits) {
  if (t.size() == 0) throw DataError("cannot calibrate an empty tensor");
  auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
  const double levels = std::ldexp(1.0, bits) - 1.0;
  QuantParams p;
  p.bits = bits;
  if (*hi > 0.0f) {
    p.scale = static_cast<float>(std::fabs(static_cast<double>(*hi)) / levels);
  } else if (*lo < 0.0f) {
    p.scale = static_cast<float>(std::fabs(static_cast<double>(*lo)) / levels);
  } else {
    p.scale = 1.0f;
  }
  p.validate();
  return p;
}

std::int32_t quantize_value(float x, const QuantParams& p) {
  const double q = round_half_away(static_cast<double>(x) / static_cast<double>(p.scale));
  const double clamped =
      std::clamp(q, static_cast<double>(code_min(p.bits)), static_cast<double>(code_max(p.bits)));
  return static_cast<std::int32_t>(clamped);
}

QuantizedTensor quantize(const Tensor& t, const QuantParams& p) {
  p.validate();
  QuantizedTensor q{t.shape(), std::vector<std::int32_t>(t.size()), p};
  auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) q.codes[i] = quantize_value(data[i], p);
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  std::vector<float> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(q.codes[i]) * q.params.scale;
  return Tensor(q.shape, std::move(out));
}

Tensor fake_quantize(const Tensor& t, const QuantParams& p) { return dequantize(quantize(t, p)); }

double mse(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("mse: size mismatch");
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shape " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  return mse(a.data(), b.data());
}

double sqnr_db(std::span<const float> ref, std::span<const float> test) {
  if (ref.size() != test.size()) throw ShapeError("sqnr: size mismatch");
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double r = ref[i];
    const double d = r - static_cast<double>(test[i]);
    signal += r * r;
    noise += d * d;
  }
  if (signal == 0.0) throw NumericalError("sqnr undefined for a zero-energy reference");
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

double sqnr_db(const Tensor& ref, const Tensor& test) {
  if (ref.shape() != test.shape()) {
    throw ShapeError("sqnr: shape " + shape_to_string(ref.shape()) + " vs " + shape_to_string(test.shape()));
  }
  return sqnr_db(ref.data(), test.data());
}

}  // namespace tsq
