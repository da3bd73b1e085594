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
#include "tsq/calib_result.hpp"
#include "tsq/errors.hpp"
#include "tsq/search.hpp"

using namespace tsq;

namespace {

// y = a W with a (rows, in) and W (in, out), evaluated in double.
LayerEvaluator linear_layer(std::size_t in, std::size_t out) {
  return [in, out](const Tensor* w, const Tensor& a) {
    const std::size_t rows = a.size() / in;
    Tensor y({rows, out});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        double acc = 0;
        for (std::size_t i = 0; i < in; ++i) acc += double(a[r * in + i]) * (*w)[i * out + o];
        y[r * out + o] = static_cast<float>(acc);
      }
    return y;
  };
}

LayerEvaluator identity_layer() {
  return [](const Tensor*, const Tensor& a) { return a; };
}

Tensor planted_outliers(Rng& rng, std::size_t rows, std::size_t channels) {
  Tensor t = testing::normal_tensor(rng, {rows, channels});
  for (const std::size_t c : {std::size_t{1}, channels / 2}) {
    for (std::size_t r = 0; r < rows; ++r) t[r * channels + c] *= 40.0f;
  }
  return t;
}

}  // namespace

TEST_CASE("candidate grid arithmetic") {
  const auto g = candidate_grid(1.0f, 6, 4, 1.2);
  REQUIRE(g.size() == 4);
  const double expect[] = {0.009375, 0.01875, 0.028125, 0.0375};
  for (int i = 0; i < 4; ++i) CHECK(g[i] == static_cast<float>(expect[i]));
  CHECK(candidate_grid(1.0f, 6, 1, 1.2) == std::vector<float>{static_cast<float>(1.2 / 32)});
  CHECK(candidate_grid(0.0f, 8, 100, 1.2) == std::vector<float>{1.0f});
  CHECK_THROWS_AS(candidate_grid(-1.0f, 8, 10, 1.2), ValidationError);
}

TEST_CASE("config defaults and round trip") {
  const SearchConfig d;
  CHECK(d.rounds == 3);
  CHECK(d.candidates == 100);
  CHECK(d.max_shift == 6);
  CHECK(d.space_factor == 1.2);
  SearchConfig c;
  c.rounds = 5;
  c.metric = MetricKind::grad_weighted;
  c.space_factor = 0.7;
  c.seed = 99;
  CHECK(search_config_from_json(search_config_to_json(c)) == c);
  CHECK(search_config_from_json(search_config_to_json(d)) == d);
  SearchConfig bad;
  bad.rounds = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("metric equivalences") {
  Rng rng(1);
  const Tensor fp = testing::normal_tensor(rng, {4, 5});
  const Tensor q = testing::normal_tensor(rng, {4, 5});
  Tensor ones({4, 5});
  for (auto& v : ones.mutable_data()) v = 1.0f;
  const Tensor zeros({4, 5});
  double sse = 0;
  for (std::size_t i = 0; i < fp.size(); ++i) sse += (double(fp[i]) - q[i]) * (double(fp[i]) - q[i]);
  CHECK(hessian_metric({fp, q}, MetricKind::plain_mse) == doctest::Approx(sse).epsilon(1e-12));
  CHECK(hessian_metric({fp, q, &ones}, MetricKind::grad_weighted) == hessian_metric({fp, q}, MetricKind::plain_mse));
  CHECK(hessian_metric({fp, q, &zeros}, MetricKind::grad_weighted) == 0.0);
  CHECK(hessian_metric({fp, fp}, MetricKind::plain_mse) == 0.0);
  CHECK(gradient_is_degenerate(zeros));
  CHECK_THROWS_AS(hessian_metric({fp, Tensor({5, 4})}, MetricKind::plain_mse), ShapeError);
  CHECK_THROWS_AS(hessian_metric({fp, q}, MetricKind::grad_weighted), DataError);
}

TEST_CASE("zero gradient falls back with a warning") {
  Rng rng(2);
  const Tensor a = testing::normal_tensor(rng, {6, 4});
  const Tensor zeros({6, 4});
  SearchConfig cfg;
  cfg.metric = MetricKind::grad_weighted;
  cfg.candidates = 20;
  const LayerSearchInput in{"id", identity_layer(), nullptr, &a, &zeros, {}, std::nullopt};
  const LayerCalibration r = search_layer(in, cfg);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("plain_mse") != std::string::npos);
  CHECK(r.metric > 0.0);
}

TEST_CASE("exactly representable activations are a fixed point") {
  // Grid {1/128, 1/64}; every value is a multiple of 1/64 within 64 codes.
  Tensor a({129});
  for (int k = -64; k <= 64; ++k) a[static_cast<std::size_t>(k + 64)] = static_cast<float>(k) / 64.0f;
  SearchConfig cfg;
  cfg.candidates = 2;
  cfg.space_factor = 2.0;
  const LayerSearchInput in{"id", identity_layer(), nullptr, &a, nullptr, {}, std::nullopt};
  const LayerCalibration r = search_layer(in, cfg);
  CHECK(std::get<QuantParams>(r.activation).scale == 1.0f / 64);
  CHECK(r.metric == 0.0);
}

TEST_CASE("returned scales belong to their grids and rounds never get worse") {
  Rng rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const Tensor a = testing::normal_tensor(rng, {16, 8});
    const Tensor w = testing::normal_tensor(rng, {8, 4}, 0.3);
    SearchConfig cfg;
    cfg.candidates = 25;
    cfg.rounds = 4;
    const LayerSearchInput in{"lin", linear_layer(8, 4), &w, &a, nullptr, {}, std::nullopt};
    const LayerCalibration r = search_layer(in, cfg);
    REQUIRE(r.round_metrics.size() == 4);
    for (std::size_t i = 1; i < r.round_metrics.size(); ++i) CHECK(r.round_metrics[i] <= r.round_metrics[i - 1]);
    CHECK(r.metric == r.round_metrics.back());
    const auto wg = candidate_grid(abs_max(w.data()), 8, 25, 1.2);
    const auto ag = candidate_grid(abs_max(a.data()), 8, 25, 1.2);
    CHECK(std::find(wg.begin(), wg.end(), r.weight->scale) != wg.end());
    CHECK(std::find(ag.begin(), ag.end(), std::get<QuantParams>(r.activation).scale) != ag.end());
  }
}

TEST_CASE("o2sf search matches an exhaustive sweep of the same candidates") {
  Rng rng(4);
  const Tensor a = planted_outliers(rng, 24, 12);
  const Tensor w = testing::normal_tensor(rng, {12, 3}, 0.3);
  SearchConfig cfg;
  cfg.candidates = 10;
  const LayerSearchInput in{"lin", linear_layer(12, 3), &w, &a, nullptr, {Scheme::o2sf, {}, 4, 1}, std::nullopt};
  const LayerCalibration r = search_layer(in, cfg);
  const O2sfParams& p = std::get<O2sfParams>(r.activation);
  CHECK(p.shift_exact());

  // Oracle: mask from the threshold scan, weights at the returned scale.
  const SliceStats st = elementwise_stats(a, 1);
  std::vector<std::uint8_t> mask(12, 0);
  float normal_max = 0, outlier_max = 0;
  for (std::size_t c = 0; c < 12; ++c) {
    mask[c] = st.abs_max[c] > 10.0f;
    (mask[c] ? outlier_max : normal_max) = std::max(mask[c] ? outlier_max : normal_max, st.abs_max[c]);
  }
  CHECK(p.outlier_mask == mask);
  const auto eval = linear_layer(12, 3);
  const Tensor fp = eval(&w, a);
  const Tensor wq = fake_quantize(w, *r.weight);
  double best = std::numeric_limits<double>::infinity();
  for (const float so : candidate_grid(outlier_max, 8, 10, 1.2)) {
    for (int k = 0; k <= 6; ++k) {
      const Tensor aq = o2sf_fake_quantize(a, 1, O2sfParams::from_shift(mask, so, k, 8));
      const double m = hessian_metric({fp, eval(&wq, aq)}, MetricKind::plain_mse);
      CHECK(r.metric <= m);
      best = std::min(best, m);
    }
  }
  CHECK(r.metric == best);

  // Rounds before the shift-aligned one never get worse.
  for (std::size_t i = 1; i + 1 < r.round_metrics.size(); ++i) CHECK(r.round_metrics[i] <= r.round_metrics[i - 1]);
}

TEST_CASE("results do not depend on the worker count") {
  Rng rng(5);
  const Tensor a = planted_outliers(rng, 32, 16);
  const Tensor w = testing::normal_tensor(rng, {16, 4}, 0.3);
  for (const Scheme s : {Scheme::uniform, Scheme::o2sf}) {
    SearchConfig one, many;
    one.threads = 1;
    many.threads = 7;
    one.candidates = many.candidates = 40;
    const LayerSearchInput in{"lin", linear_layer(16, 4), &w, &a, nullptr, {s, {}, 4, 1}, std::nullopt};
    const LayerCalibration x = search_layer(in, one);
    const LayerCalibration y = search_layer(in, many);
    CHECK(x.metric == y.metric);
    CHECK(x.round_metrics == y.round_metrics);
    CHECK(x.weight == y.weight);
  }
}

TEST_CASE("v2sf search sweeps the fine scale") {
  Rng rng(6);
  const Tensor p = testing::softmax_of_gaussian(rng, 8, 197, 1.0);
  const V2sfParams v = best_v2sf_params(p, V2sfKind::softmax, 6, 4, SearchConfig{});
  CHECK(v.bits == 6);
  CHECK(v.shift == 4);
  const auto grid = candidate_grid(abs_max(p.data()), 10, 100, 1.2);
  CHECK(std::find(grid.begin(), grid.end(), v.small_scale) != grid.end());
  // GeLU grids reach far enough to cover the negative tail.
  const Tensor g({4}, {-0.17f, 0.0f, 0.3f, 0.86f});
  CHECK(v2sf_grid_max(g, V2sfParams{V2sfKind::gelu, 8, 3, 1.0f}) >= 0.86f);
}

TEST_CASE("non-finite candidates are skipped") {
  Tensor a({5}, {0.33f, -0.2f, 0.1f, 0.05f, -0.31f});
  // Candidates that round the first element up are rejected.
  const LayerEvaluator eval = [&a](const Tensor*, const Tensor& q) {
    if (q[0] > a[0]) return Tensor({5}, std::vector<float>(5, std::numeric_limits<float>::quiet_NaN()));
    return q;
  };
  SearchConfig cfg;
  cfg.candidates = 30;
  const LayerCalibration r = search_layer({"nan", eval, nullptr, &a, nullptr, {}, std::nullopt}, cfg);
  CHECK(std::isfinite(r.metric));
  CHECK(fake_quantize(a, std::get<QuantParams>(r.activation))[0] <= a[0]);

  const LayerEvaluator all_nan = [](const Tensor*, const Tensor& q) {
    return Tensor(q.shape(), std::vector<float>(q.size(), std::numeric_limits<float>::quiet_NaN()));
  };
  CHECK_THROWS_AS(search_layer({"nan", all_nan, nullptr, &a, nullptr, {}, std::nullopt}, cfg), NumericalError);
}
