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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "support.hpp"
#include "tsq/errors.hpp"
#include "tsq/o2sf.hpp"

using namespace tsq;

namespace {

// Brute-force scan over every split of the sorted values.
std::vector<std::size_t> threshold_oracle(const std::vector<float>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  auto sse = [&](std::size_t lo, std::size_t hi) {
    double mean = 0;
    for (std::size_t i = lo; i < hi; ++i) mean += v[order[i]];
    mean /= double(hi - lo);
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += (v[order[i]] - mean) * (v[order[i]] - mean);
    return s;
  };
  double best = std::numeric_limits<double>::infinity();
  std::size_t cut = v.size() - 1;
  for (std::size_t c = v.size() - 1; c >= 1; --c) {
    if (v[order[c]] == v[order[c - 1]]) continue;
    const double s = sse(0, c) + sse(c, v.size());
    if (s < best) {
      best = s;
      cut = c;
    }
  }
  std::vector<std::size_t> out(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<float> candidate_grid_for_test(float max_val, int bits, int n) {
  std::vector<float> g;
  for (int i = 1; i <= n; ++i) g.push_back(static_cast<float>(1.2 * max_val / std::ldexp(1.0, bits - 1) * i / n));
  return g;
}

Tensor channel_tensor(Rng& rng, std::size_t rows, const std::vector<float>& channel_scale) {
  Tensor t({rows, channel_scale.size()});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < channel_scale.size(); ++c)
      t[r * channel_scale.size() + c] = static_cast<float>(rng.normal() * channel_scale[c]);
  return t;
}

}  // namespace

TEST_CASE("outlier detection examples") {
  const std::vector<float> a{1.0f, 1.1f, 0.9f, 40.0f, 39.0f};
  const ChannelPartition p = detect_outlier_channels(a);
  CHECK(p.outlier_indices == std::vector<std::size_t>{3, 4});
  CHECK(p.normal_indices == std::vector<std::size_t>{0, 1, 2});
  CHECK(p.threshold == 1.1f);
  CHECK(p.mask() == std::vector<std::uint8_t>{0, 0, 0, 1, 1});

  const std::vector<float> eq{5, 5, 5, 5};
  const ChannelPartition d = detect_outlier_channels(eq);
  CHECK(d.degenerate);
  CHECK(d.outlier_indices == std::vector<std::size_t>{0});

  CHECK_THROWS_AS(detect_outlier_channels(std::vector<float>{1.0f}), DataError);
  CHECK_THROWS_AS(detect_outlier_channels(std::vector<float>{1.0f, -1.0f}), DataError);
}

TEST_CASE("outlier detection matches the threshold-scan oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v(64);
    for (auto& x : v) x = 0.5f + rng.uniform01();
    std::vector<std::size_t> planted;
    while (planted.size() < 3) {
      const std::size_t c = rng.below(64);
      if (std::find(planted.begin(), planted.end(), c) == planted.end()) planted.push_back(c);
    }
    for (const auto c : planted) v[c] = 40.0f * (0.95f + 0.1f * rng.uniform01());
    std::sort(planted.begin(), planted.end());
    const ChannelPartition p = detect_outlier_channels(v);
    CHECK(p.outlier_indices == planted);
    CHECK(p.outlier_indices == threshold_oracle(v));

    std::vector<float> r(12);
    for (auto& x : r) x = static_cast<float>(std::fabs(rng.normal()));
    CHECK(detect_outlier_channels(r).outlier_indices == threshold_oracle(r));
  }
}

TEST_CASE("shift-aligned candidates") {
  const auto c = eq4_candidates(0.8f, 6);
  const std::vector<float> expect{0.8f, 0.4f, 0.2f, 0.1f, 0.05f, 0.025f, 0.0125f};
  CHECK(c == expect);
  for (std::size_t k = 0; k < c.size(); ++k) CHECK(std::ldexp(c[k], static_cast<int>(k)) == 0.8f);
  CHECK(eq4_candidates(0.3f, 0) == std::vector<float>{0.3f});

  const O2sfParams p = O2sfParams::from_shift({1, 0}, 0.37f, 5, 8);
  CHECK(p.shift_exact());
  CHECK(p.normal_scale * 32.0f == 0.37f);
  O2sfParams bad = p;
  bad.normal_scale = 0.37f / 31;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("mask packing puts channel 0 at the LSB") {
  const std::vector<std::uint8_t> mask{1, 0, 0, 1, 0, 0, 0, 0, 1, 1};
  const auto packed = pack_mask(mask);
  REQUIRE(packed.size() == 2);
  CHECK(packed[0] == 0x09);
  CHECK(packed[1] == 0x03);
  CHECK(unpack_mask(packed, mask.size()) == mask);
}

TEST_CASE("degenerate settings reduce to uniform quantization") {
  Rng rng(9);
  const Tensor t = channel_tensor(rng, 16, {1, 1, 30, 1, 1, 25});
  const QuantParams u{0.02f, 0, 8};

  const O2sfParams zero_mask = O2sfParams::from_shift({0, 0, 0, 0, 0, 0}, 0.16f, 3, 8);
  const O2sfQuantized q = o2sf_quantize(t, 1, zero_mask);
  CHECK(q.codes == quantize(t, u).codes);

  const O2sfParams k0a = O2sfParams::from_shift({0, 0, 1, 0, 0, 1}, 0.02f, 0, 8);
  const O2sfParams k0b = O2sfParams::from_shift({1, 1, 0, 1, 0, 0}, 0.02f, 0, 8);
  CHECK(o2sf_quantize(t, 1, k0a).codes == quantize(t, u).codes);
  CHECK(o2sf_fake_quantize(t, 1, k0a) == o2sf_fake_quantize(t, 1, k0b));

  CHECK_THROWS_AS(o2sf_quantize(t, 1, O2sfParams::from_shift({0, 1}, 0.1f, 1, 8)), ShapeError);
}

TEST_CASE("aligned codes are outlier codes shifted left by k") {
  Rng rng(10);
  const Tensor t = channel_tensor(rng, 8, {1, 20, 1});
  const O2sfParams p = O2sfParams::from_shift({0, 1, 0}, 0.4f, 4, 8);
  const O2sfQuantized q = o2sf_quantize(t, 1, p);
  const auto aligned = o2sf_aligned_codes(q);
  const Tensor d = o2sf_dequantize(q);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool outlier = (i % 3) == 1;
    CHECK(aligned[i] == (outlier ? std::int64_t{q.codes[i]} * 16 : q.codes[i]));
    CHECK(d[i] == static_cast<float>(aligned[i] * double(p.normal_scale)));
  }
}

TEST_CASE("dual scales beat a single scale on strong outliers") {
  Rng rng(12);
  int strict = 0;
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<float> scales(32, 1.0f);
    scales[rng.below(32)] = 40.0f;
    scales[rng.below(32)] = 20.0f;
    const Tensor t = channel_tensor(rng, 32, scales);
    const SliceStats st = elementwise_stats(t, 1);
    const ChannelPartition part = detect_outlier_channels(st.abs_max);
    // Both schemes pick their best scales from the same grid; k = 0 is the
    // single-scale quantizer.
    double single = std::numeric_limits<double>::infinity();
    double dual = single;
    for (const float s : candidate_grid_for_test(abs_max(t.data()), 8, 50)) {
      single = std::min(single, mse(t, fake_quantize(t, QuantParams{s, 0, 8})));
      for (int k = 0; k <= 6; ++k) {
        dual = std::min(dual, mse(t, o2sf_fake_quantize(t, 1, O2sfParams::from_shift(part.mask(), s, k, 8))));
      }
    }
    CHECK(dual <= single);
    strict += dual < single;
  }
  CHECK(strict >= trials * 95 / 100);
}

TEST_CASE("per-channel shift-candidate baseline") {
  const float s = 0.1f;
  // Channel 0 on the s grid and too wide for s / 2; channel 1 below s / 8.
  const Tensor t({3, 2}, {0.3f, 0.008f, -0.5f, 0.011f, 12.0f, -0.009f});
  const ChannelwiseSelection sel = baseline_fqvit_channelwise(t, 1, s, 8);
  CHECK(sel.indices == std::vector<std::uint8_t>{0, 3});
  CHECK(sel.channel_scale(1) == s / 8);

  // Oracle: per-channel L2 sweep.
  Rng rng(13);
  const Tensor r = channel_tensor(rng, 20, {1.0f, 0.2f, 0.05f, 0.01f});
  const ChannelwiseSelection rs = baseline_fqvit_channelwise(r, 1, 0.03f, 8);
  for (std::size_t c = 0; c < 4; ++c) {
    double best = std::numeric_limits<double>::infinity();
    int best_i = 0;
    for (int i = 0; i < 4; ++i) {
      const QuantParams q{std::ldexp(0.03f, -i), 0, 8};
      double err = 0;
      for (std::size_t row = 0; row < 20; ++row) {
        const float x = r[row * 4 + c];
        const double d = x - double(dequantize(quantize(Tensor({1}, {x}), q))[0]);
        err += d * d;
      }
      if (err < best) {
        best = err;
        best_i = i;
      }
    }
    CHECK(rs.indices[c] == best_i);
  }

  const OverheadReport o = overhead_report(64);
  CHECK(o.channelwise_total_bits() == 128);
  CHECK(o.o2sf_total_bits() == 64);
  CHECK(!o.describe().empty());
}
