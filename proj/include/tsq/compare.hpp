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
#include <string>
#include <vector>

#include "tsq/search.hpp"
#include "tsq/v2sf.hpp"
#include "tsq/vit_block.hpp"

namespace tsq {

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;

  /// "bin_left,bin_right,count" rows after a header line.
  std::string to_csv() const;
};

/// Equal-width bins over [lo, hi]; values outside the range land in the
/// first or last bin. A degenerate range is widened to one unit.
Histogram make_histogram(std::span<const float> values, double lo, double hi, std::size_t bins);

/// Number of distinct canonical V-2SF codes the tensor encodes to.
std::size_t v2sf_levels_used(const Tensor& t, const V2sfParams& p);

struct SchemeResult {
  std::string scheme;  // "uniform", "twin_region", "v2sf"
  double mse = 0.0;
  Histogram histogram;
  std::size_t levels_used = 0;
  std::size_t levels_available = 0;
};

struct SiteComparison {
  std::string site;
  float fp_min = 0.0f;
  float fp_max = 0.0f;
  std::vector<SchemeResult> schemes;
  std::size_t best = 0;  // index of the lowest-MSE scheme
  std::size_t twin_r2_bins_used = 0;
  std::size_t twin_r2_bins_total = 0;
};

struct CompareReport {
  int bits = 8;
  std::size_t samples = 0;
  std::vector<SiteComparison> sites;
};

inline constexpr std::size_t kHistogramBins = 128;

/// Uniform, twin-region and V-2SF quantization of one tensor, each with its
/// own best scale; `kind` selects the softmax or GeLU variants.
SiteComparison compare_tensor(const std::string& site, const Tensor& t, V2sfKind kind, int bits,
                              const SearchConfig& cfg);

/// Runs the FP block over the batch and compares the three schemes at the
/// post-softmax and post-GeLU sites.
CompareReport compare_schemes(const BlockSpec& spec, const BlockWeights& w, const Tensor& batch, int bits,
                              const SearchConfig& cfg);

/// Fixed-width table with the lowest-MSE scheme of each site marked '*'.
std::string compare_summary(const CompareReport& r);

}  // namespace tsq
