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
#include <string>
#include <vector>

#include "tsq/quant.hpp"
#include "tsq/tensor.hpp"

namespace tsq {

/// Split of C channels into an outlier class and a normal class.
struct ChannelPartition {
  std::vector<std::size_t> outlier_indices;
  std::vector<std::size_t> normal_indices;
  /// Largest abs-max in the normal class; every value above it is an outlier.
  float threshold = 0.0f;
  /// Set when all values were equal and the lowest-index channel was forced
  /// into the outlier class.
  bool degenerate = false;

  std::size_t channel_count() const { return outlier_indices.size() + normal_indices.size(); }
  /// One flag per channel, 1 = outlier.
  std::vector<std::uint8_t> mask() const;
};

/// Two-cluster k-means on per-channel abs-max values. Solved exactly: in one
/// dimension the optimal clusters are separated by a threshold, so the split
/// minimising within-cluster squared error is found by a sorted prefix-sum
/// scan. Ties between equal-error splits go to the smaller outlier class.
/// Throws DataError for fewer than two channels or negative values.
ChannelPartition detect_outlier_channels(std::span<const float> abs_max);

/// Per-channel dual-scale parameters. s_n = s_o / 2^k exactly.
struct O2sfParams {
  std::vector<std::uint8_t> outlier_mask;
  float outlier_scale = 1.0f;  // s_o
  float normal_scale = 1.0f;   // s_n
  int shift = 0;               // k
  int bits = 8;

  /// Builds params with normal_scale = ldexp(outlier_scale, -shift).
  static O2sfParams from_shift(std::vector<std::uint8_t> mask, float outlier_scale, int shift, int bits);

  /// Checks positivity, s_o >= s_n, and s_n * 2^k == s_o bit-exactly.
  void validate() const;
  bool shift_exact() const;

  std::size_t outlier_count() const;
};

struct O2sfQuantized {
  Shape shape;
  std::size_t channel_axis = 0;
  std::vector<std::int32_t> codes;
  O2sfParams params;
};

/// Quantizes each element with its channel's scale.
/// Throws ShapeError if the mask length differs from the channel count.
O2sfQuantized o2sf_quantize(const Tensor& t, std::size_t channel_axis, const O2sfParams& p);
Tensor o2sf_dequantize(const O2sfQuantized& q);
Tensor o2sf_fake_quantize(const Tensor& t, std::size_t channel_axis, const O2sfParams& p);

/// Quantization with two unrelated scales; used by the search before the
/// final shift-aligned iteration.
Tensor dual_scale_fake_quantize(const Tensor& t, std::size_t channel_axis, std::span<const std::uint8_t> mask,
                                float outlier_scale, float normal_scale, int bits);

/// Codes re-expressed in units of s_n: outlier codes are shifted left by k.
std::vector<std::int64_t> o2sf_aligned_codes(const O2sfQuantized& q);

/// {s_o >> k | k = 0..max_shift}: max_shift + 1 candidates, s_o / 2^k.
std::vector<float> eq4_candidates(float outlier_scale, int max_shift);

/// Bit-packed mask, channel 0 at the LSB of byte 0.
std::vector<std::uint8_t> pack_mask(std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> unpack_mask(std::span<const std::uint8_t> packed, std::size_t channels);

// ---------------------------------------------------------------------------
// Per-channel shift-candidate baseline: each channel picks i in {0,1,2,3}
// with scale s / 2^i that minimises its own L2 quantization error.

struct ChannelwiseSelection {
  std::vector<std::uint8_t> indices;
  float base_scale = 1.0f;
  int bits = 8;

  static constexpr int kCandidates = 4;
  static constexpr int kIndexBits = 2;

  float channel_scale(std::size_t c) const;
};

ChannelwiseSelection baseline_fqvit_channelwise(const Tensor& t, std::size_t channel_axis, float base_scale,
                                                int bits);
Tensor channelwise_fake_quantize(const Tensor& t, std::size_t channel_axis, const ChannelwiseSelection& sel);

/// Per-channel side information each scheme stores.
struct OverheadReport {
  std::size_t channels = 0;
  int channelwise_bits_per_channel = ChannelwiseSelection::kIndexBits;
  int o2sf_bits_per_channel = 1;

  std::size_t channelwise_total_bits() const { return channels * channelwise_bits_per_channel; }
  std::size_t o2sf_total_bits() const { return channels * o2sf_bits_per_channel; }
  std::string describe() const;
};

OverheadReport overhead_report(std::size_t channels);

}  // namespace tsq
