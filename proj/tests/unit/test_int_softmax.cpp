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
#include <numeric>

#include "support.hpp"
#include "tsq/errors.hpp"
#include "tsq/int_softmax.hpp"

using namespace tsq;

namespace {

std::vector<double> float_softmax(const std::vector<std::int32_t>& q, double s) {
  double m = -1e300;
  for (auto v : q) m = std::max(m, v * s);
  std::vector<double> out(q.size());
  double sum = 0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += (out[i] = std::exp(q[i] * s - m));
  for (auto& v : out) v /= sum;
  return out;
}

}  // namespace

TEST_CASE("int_exp boundary values") {
  const IntSoftmaxConfig cfg;
  const double e0 = int_exp_to_double(int_exp(0, 0.01, cfg), cfg.frac_bits);
  CHECK(std::fabs(e0 - 1.0) < 2e-3);

  // x = -ln2 exactly: one halving and a zero remainder.
  const double ln2 = std::log(2.0);
  const IntExpResult r = int_exp(-1, ln2, cfg);
  CHECK(r.shift == 1);
  const IntExpResult l0 = int_exp(0, ln2, cfg);
  CHECK(r.mantissa == l0.mantissa);
  CHECK(r.value() == l0.mantissa / 2);

  CHECK_THROWS_AS(int_exp(1, 0.1, cfg), DataError);
}

TEST_CASE("int_exp relative error stays small") {
  const IntExpToleranceReport t = int_exp_tolerance(-10.0, 20000);
  CHECK(t.points == 20000);
  CHECK(t.max_relative_error < 0.01);
}

TEST_CASE("all-equal rows are uniform within one output ulp") {
  for (const std::size_t n : {1u, 3u, 8u, 197u}) {
    const std::vector<std::int32_t> q(n, -17);
    const IntSoftmaxRow r = int_softmax_row(q, 0.05);
    CHECK(r.output_scale == std::ldexp(1.0, -16));
    for (const auto c : r.codes) CHECK(std::fabs(c * r.output_scale - 1.0 / double(n)) <= r.output_scale);
  }
  CHECK_THROWS_AS(int_softmax_row(std::vector<std::int32_t>{}, 0.1), DataError);
}

TEST_CASE("a dominant logit takes almost all the mass") {
  const double s = 0.05;
  std::vector<std::int32_t> q(50, 0);
  q[7] = 20 * 20;  // 20 units above the rest
  const IntSoftmaxRow r = int_softmax_row(q, s);
  CHECK(r.codes[7] * r.output_scale >= 0.999);
  CHECK(float_softmax(q, s)[7] >= 0.999);
}

TEST_CASE("matches the float softmax and preserves ordering") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const double s = 0.02 + 0.01 * (trial % 5);
    std::vector<std::int32_t> q(64);
    for (auto& v : q) v = static_cast<std::int32_t>(std::lround(rng.normal() * 2.0 / s));
    const IntSoftmaxRow r = int_softmax_row(q, s);
    const auto ref = float_softmax(q, s);
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(std::fabs(r.codes[i] * r.output_scale - ref[i]) <= 0.01 * ref[i] + 2 * r.output_scale);
    }
    const auto imax = std::max_element(q.begin(), q.end()) - q.begin();
    const auto rmax = std::max_element(r.codes.begin(), r.codes.end()) - r.codes.begin();
    CHECK(r.codes[static_cast<std::size_t>(rmax)] == r.codes[static_cast<std::size_t>(imax)]);

    // Shifting every logit by a constant changes nothing.
    auto shifted = q;
    for (auto& v : shifted) v += 1234;
    CHECK(int_softmax_row(shifted, s).codes == r.codes);
  }
}
