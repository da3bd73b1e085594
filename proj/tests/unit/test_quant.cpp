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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "tsq/errors.hpp"
#include "tsq/quant.hpp"

using namespace tsq;

TEST_CASE("calibrate_uniform follows the max / (2^b - 1) rule") {
  CHECK(calibrate_uniform(Tensor({3}, {0.2f, 1.0f, -0.5f}), 8).scale == doctest::Approx(1.0 / 255).epsilon(1e-7));
  CHECK(calibrate_uniform(Tensor({4}), 8).scale == 1.0f);
  // max <= 0 falls back to |min|.
  CHECK(calibrate_uniform(Tensor({2}, {-2.0f, -1.0f}), 4).scale == doctest::Approx(2.0 / 15).epsilon(1e-7));
  CHECK_THROWS_AS(calibrate_uniform(Tensor({0}), 8), DataError);
}

TEST_CASE("quantize rounds half away from zero and clamps") {
  const QuantParams p{0.5f, 0, 8};
  CHECK(quantize_value(0.0f, p) == 0);
  CHECK(quantize_value(1.25f, p) == 3);   // 2.5 -> 3
  CHECK(quantize_value(-1.25f, p) == -3);
  CHECK(quantize_value(0.5f * (128 + 5), p) == 127);
  CHECK(quantize_value(-1000.0f, p) == -128);
  CHECK_THROWS_AS(QuantParams({0.0f, 0, 8}).validate(), ValidationError);
  CHECK_THROWS_AS(QuantParams({1.0f, 1, 8}).validate(), ValidationError);
  CHECK_THROWS_AS(QuantParams({1.0f, 0, 17}).validate(), ValidationError);
  CHECK_THROWS_AS(QuantParams({1.0f, 0, 1}).validate(), ValidationError);
}

TEST_CASE("dequantize arithmetic and error bound") {
  const QuantParams p{0.01f, 0, 8};
  const QuantizedTensor q{{1}, {127}, p};
  CHECK(dequantize(q)[0] == doctest::Approx(1.27));

  Rng rng(5);
  const Tensor t = testing::normal_tensor(rng, {32, 16});
  const QuantParams cal = calibrate_uniform(t, 8);
  const QuantizedTensor qt = quantize(t, cal);
  const Tensor deq = dequantize(qt);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(qt.codes[i] >= code_min(8));
    CHECK(qt.codes[i] <= code_max(8));
    const bool in_range = qt.codes[i] > code_min(8) && qt.codes[i] < code_max(8);
    if (in_range) CHECK(std::fabs(t[i] - deq[i]) <= cal.scale / 2 * (1 + 1e-6));
  }
  // Idempotence of the code set.
  CHECK(quantize(deq, cal).codes == qt.codes);
}

TEST_CASE("mse and sqnr against a scalar loop") {
  CHECK(mse(Tensor({2}, {1, 1}), Tensor({2}, {0, 0})) == 1.0);
  CHECK(sqnr_db(Tensor({2}, {1, 1}), Tensor({2}, {0, 0})) == doctest::Approx(0.0));
  CHECK(std::isinf(sqnr_db(Tensor({2}, {1, 2}), Tensor({2}, {1, 2}))));
  CHECK_THROWS_AS(sqnr_db(Tensor({2}), Tensor({2}, {1, 0})), NumericalError);
  CHECK_THROWS_AS(mse(Tensor({2}), Tensor({3})), ShapeError);

  Rng rng(8);
  const Tensor a = testing::normal_tensor(rng, {50});
  const Tensor b = testing::normal_tensor(rng, {50});
  double se = 0, sig = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    se += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    sig += double(a[i]) * a[i];
  }
  CHECK(mse(a, b) == doctest::Approx(se / 50).epsilon(1e-12));
  CHECK(sqnr_db(a, b) == doctest::Approx(10 * std::log10(sig / se)).epsilon(1e-12));
}
