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

#include "tsq/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "tsq/errors.hpp"
#include "tsq/quant.hpp"

namespace tsq {

std::string Histogram::to_csv() const {
  std::ostringstream os;
  os << "bin_left,bin_right,count\n";
  char line[96];
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::snprintf(line, sizeof line, "%.9g,%.9g,%zu\n", edges[i], edges[i + 1], counts[i]);
    os << line;
  }
  return os.str();
}

Histogram make_histogram(std::span<const float> values, double lo, double hi, std::size_t bins) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
  h.counts.assign(bins, 0);
  for (float v : values) {
    const double pos = (static_cast<double>(v) - lo) / (hi - lo) * static_cast<double>(bins);
    const auto idx = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(bins - 1)));
    ++h.counts[idx];
  }
  return h;
}

std::size_t v2sf_levels_used(const Tensor& t, const V2sfParams& p) {
  std::set<std::uint32_t> words;
  for (float v : t.data()) words.insert(v2sf_pack_word(v2sf_encode_value(v, p), p));
  return words.size();
}

namespace {

std::size_t distinct(const Tensor& t) {
  return std::set<float>(t.data().begin(), t.data().end()).size();
}

// GeLU twin-region: the positive-region step is searched on the usual grid.
TwinRegionParams best_twin_gelu(const Tensor& t, int bits, const SearchConfig& cfg) {
  const auto grid = candidate_grid(abs_max(t.data()), bits, cfg.candidates, cfg.space_factor);
  TwinRegionParams best{V2sfKind::gelu, bits, default_v2sf_shift(V2sfKind::gelu), grid.front()};
  double best_mse = mse(t, twin_region_fake_quantize(t, best));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    TwinRegionParams p = best;
    p.r2_scale = grid[i];
    const double m = mse(t, twin_region_fake_quantize(t, p));
    if (m < best_mse) {
      best_mse = m;
      best = p;
    }
  }
  return best;
}

}  // namespace

SiteComparison compare_tensor(const std::string& name, const Tensor& t, V2sfKind kind, int bits,
                              const SearchConfig& cfg) {
  SiteComparison sc;
  sc.site = name;
  const SliceStats st = elementwise_stats(t);
  sc.fp_min = st.min[0];
  sc.fp_max = st.max[0];
  auto add = [&](const char* scheme, const Tensor& q, std::size_t available) {
    SchemeResult r;
    r.scheme = scheme;
    r.mse = mse(t, q);
    r.histogram = make_histogram(q.data(), sc.fp_min, sc.fp_max, kHistogramBins);
    r.levels_used = distinct(q);
    r.levels_available = available;
    sc.schemes.push_back(std::move(r));
  };

  const QuantParams up = best_uniform_params(t, bits, cfg);
  add("uniform", fake_quantize(t, up), std::size_t{1} << bits);

  const TwinRegionParams tp = kind == V2sfKind::softmax ? twin_region_softmax_params(bits, default_v2sf_shift(kind))
                                                        : best_twin_gelu(t, bits, cfg);
  const TwinRegionQuantized tq = baseline_twin_region_encode(t, tp);
  add("twin_region", twin_region_decode(tq), std::size_t{1} << bits);
  sc.twin_r2_bins_used = twin_region_r2_bins_used(tq);
  sc.twin_r2_bins_total = std::size_t{1} << (bits - 1);

  const V2sfParams vp = best_v2sf_params(t, kind, bits, default_v2sf_shift(kind), cfg);
  add("v2sf", v2sf_fake_quantize(t, vp), v2sf_canonical_codes(vp).size());

  for (std::size_t i = 1; i < sc.schemes.size(); ++i) {
    if (sc.schemes[i].mse < sc.schemes[sc.best].mse) sc.best = i;
  }
  return sc;
}

CompareReport compare_schemes(const BlockSpec& spec, const BlockWeights& w, const Tensor& batch, int bits,
                              const SearchConfig& cfg) {
  TensorBundle cap;
  fp_forward_batch(spec, w, batch, &cap);
  CompareReport r;
  r.bits = bits;
  r.samples = batch.shape()[0];
  r.sites.push_back(compare_tensor(site::post_softmax, cap.at(bundle_name(site::post_softmax)), V2sfKind::softmax,
                                   bits, cfg));
  r.sites.push_back(
      compare_tensor(site::post_gelu, cap.at(bundle_name(site::post_gelu)), V2sfKind::gelu, bits, cfg));
  return r;
}

std::string compare_summary(const CompareReport& r) {
  std::ostringstream os;
  char line[160];
  os << "bits " << r.bits << ", " << r.samples << " samples\n";
  std::snprintf(line, sizeof line, "%-14s %-12s %14s %12s\n", "site", "scheme", "mse", "levels");
  os << line;
  for (const auto& s : r.sites) {
    for (std::size_t i = 0; i < s.schemes.size(); ++i) {
      const auto& sr = s.schemes[i];
      char levels[32];
      std::snprintf(levels, sizeof levels, "%zu/%zu", sr.levels_used, sr.levels_available);
      std::snprintf(line, sizeof line, "%-14s %-12s %14.6g %12s%s\n", s.site.c_str(), sr.scheme.c_str(), sr.mse,
                    levels, i == s.best ? " *" : "");
      os << line;
    }
    std::snprintf(line, sizeof line, "%-14s twin-region R2 bins used %zu/%zu\n", s.site.c_str(),
                  s.twin_r2_bins_used, s.twin_r2_bins_total);
    os << line;
  }
  os << "* lowest MSE per site\n";
  return os.str();
}

}  // namespace tsq
