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

#include "tsq/o2sf.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "tsq/errors.hpp"

namespace tsq {

namespace {

struct AxisGeometry {
  std::size_t channels = 0;
  std::size_t inner = 1;
};

AxisGeometry axis_geometry(const Tensor& t, std::size_t axis) {
  if (axis >= t.rank()) throw ShapeError("channel axis " + std::to_string(axis) + " out of range");
  AxisGeometry g;
  g.channels = t.shape()[axis];
  for (std::size_t i = axis + 1; i < t.rank(); ++i) g.inner *= t.shape()[i];
  return g;
}

inline std::size_t channel_of(std::size_t flat, const AxisGeometry& g) { return (flat / g.inner) % g.channels; }

}  // namespace

std::vector<std::uint8_t> ChannelPartition::mask() const {
  std::vector<std::uint8_t> m(channel_count(), 0);
  for (auto i : outlier_indices) m[i] = 1;
  return m;
}

ChannelPartition detect_outlier_channels(std::span<const float> abs_max) {
  const std::size_t n = abs_max.size();
  if (n < 2) throw DataError("outlier detection needs at least two channels");
  for (float v : abs_max) {
    if (!(v >= 0.0f)) throw DataError("channel abs-max values must be non-negative");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return abs_max[a] < abs_max[b]; });

  ChannelPartition part;
  if (abs_max[order.front()] == abs_max[order.back()]) {
    part.degenerate = true;
    part.outlier_indices = {0};
    for (std::size_t i = 1; i < n; ++i) part.normal_indices.push_back(i);
    part.threshold = abs_max[0];
    return part;
  }

  // Centre the values before accumulating to keep the prefix sums well
  // conditioned.
  double mean = 0.0;
  for (float v : abs_max) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> sum(n + 1, 0.0), sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = static_cast<double>(abs_max[order[i]]) - mean;
    sum[i + 1] = sum[i] + y;
    sq[i + 1] = sq[i] + y * y;
  }
  auto sse = [&](std::size_t lo, std::size_t hi) {
    const double cnt = static_cast<double>(hi - lo);
    const double s = sum[hi] - sum[lo];
    return (sq[hi] - sq[lo]) - s * s / cnt;
  };

  // split = number of channels in the normal class.
  std::size_t best_split = 0;
  double best = 0.0;
  for (std::size_t split = 1; split < n; ++split) {
    if (abs_max[order[split - 1]] == abs_max[order[split]]) continue;
    const double cost = sse(0, split) + sse(split, n);
    if (best_split == 0 || cost <= best) {
      best = cost;
      best_split = split;
    }
  }

  for (std::size_t i = 0; i < n; ++i) (i < best_split ? part.normal_indices : part.outlier_indices).push_back(order[i]);
  std::sort(part.normal_indices.begin(), part.normal_indices.end());
  std::sort(part.outlier_indices.begin(), part.outlier_indices.end());
  part.threshold = abs_max[order[best_split - 1]];
  return part;
}

O2sfParams O2sfParams::from_shift(std::vector<std::uint8_t> mask, float outlier_scale, int shift, int bits) {
  O2sfParams p;
  p.outlier_mask = std::move(mask);
  p.outlier_scale = outlier_scale;
  p.shift = shift;
  p.normal_scale = std::ldexp(outlier_scale, -shift);
  p.bits = bits;
  p.validate();
  return p;
}

bool O2sfParams::shift_exact() const { return std::ldexp(normal_scale, shift) == outlier_scale; }

void O2sfParams::validate() const {
  QuantParams{outlier_scale, 0, bits}.validate();
  QuantParams{normal_scale, 0, bits}.validate();
  if (shift < 0) throw ValidationError("O-2SF shift must be non-negative");
  if (!(outlier_scale >= normal_scale)) throw ValidationError("O-2SF requires s_o >= s_n");
  if (!shift_exact()) throw ValidationError("O-2SF scales are not related by an exact power of two");
}

std::size_t O2sfParams::outlier_count() const {
  return static_cast<std::size_t>(std::count(outlier_mask.begin(), outlier_mask.end(), std::uint8_t{1}));
}

O2sfQuantized o2sf_quantize(const Tensor& t, std::size_t channel_axis, const O2sfParams& p) {
  p.validate();
  const AxisGeometry g = axis_geometry(t, channel_axis);
  if (p.outlier_mask.size() != g.channels) {
    throw ShapeError("O-2SF mask has " + std::to_string(p.outlier_mask.size()) + " channels, tensor has " +
                     std::to_string(g.channels));
  }
  const QuantParams qo{p.outlier_scale, 0, p.bits};
  const QuantParams qn{p.normal_scale, 0, p.bits};
  O2sfQuantized q{t.shape(), channel_axis, std::vector<std::int32_t>(t.size()), p};
  auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    q.codes[i] = quantize_value(data[i], p.outlier_mask[channel_of(i, g)] ? qo : qn);
  }
  return q;
}

Tensor o2sf_dequantize(const O2sfQuantized& q) {
  Tensor shape_only(q.shape);
  const AxisGeometry g = axis_geometry(shape_only, q.channel_axis);
  std::vector<float> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float s = q.params.outlier_mask[channel_of(i, g)] ? q.params.outlier_scale : q.params.normal_scale;
    out[i] = static_cast<float>(q.codes[i]) * s;
  }
  return Tensor(q.shape, std::move(out));
}

Tensor o2sf_fake_quantize(const Tensor& t, std::size_t channel_axis, const O2sfParams& p) {
  return o2sf_dequantize(o2sf_quantize(t, channel_axis, p));
}

Tensor dual_scale_fake_quantize(const Tensor& t, std::size_t channel_axis, std::span<const std::uint8_t> mask,
                                float outlier_scale, float normal_scale, int bits) {
  const AxisGeometry g = axis_geometry(t, channel_axis);
  if (mask.size() != g.channels) throw ShapeError("mask length does not match channel count");
  const QuantParams qo{outlier_scale, 0, bits};
  const QuantParams qn{normal_scale, 0, bits};
  qo.validate();
  qn.validate();
  std::vector<float> out(t.size());
  auto data = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const QuantParams& q = mask[channel_of(i, g)] ? qo : qn;
    out[i] = static_cast<float>(quantize_value(data[i], q)) * q.scale;
  }
  return Tensor(t.shape(), std::move(out));
}

std::vector<std::int64_t> o2sf_aligned_codes(const O2sfQuantized& q) {
  Tensor shape_only(q.shape);
  const AxisGeometry g = axis_geometry(shape_only, q.channel_axis);
  std::vector<std::int64_t> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::int64_t c = q.codes[i];
    out[i] = q.params.outlier_mask[channel_of(i, g)] ? c * (std::int64_t{1} << q.params.shift) : c;
  }
  return out;
}

std::vector<float> eq4_candidates(float outlier_scale, int max_shift) {
  if (!(outlier_scale > 0.0f)) throw ValidationError("s_o must be positive");
  if (max_shift < 0) throw ValidationError("shift bound must be non-negative");
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(max_shift) + 1);
  for (int k = 0; k <= max_shift; ++k) out.push_back(std::ldexp(outlier_scale, -k));
  return out;
}

std::vector<std::uint8_t> pack_mask(std::span<const std::uint8_t> mask) {
  std::vector<std::uint8_t> out((mask.size() + 7) / 8, 0);
  for (std::size_t c = 0; c < mask.size(); ++c) {
    if (mask[c]) out[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_mask(std::span<const std::uint8_t> packed, std::size_t channels) {
  if (packed.size() != (channels + 7) / 8) throw FormatError("packed mask length does not match channel count");
  std::vector<std::uint8_t> out(channels);
  for (std::size_t c = 0; c < channels; ++c) out[c] = (packed[c / 8] >> (c % 8)) & 1u;
  return out;
}

float ChannelwiseSelection::channel_scale(std::size_t c) const { return std::ldexp(base_scale, -indices.at(c)); }

ChannelwiseSelection baseline_fqvit_channelwise(const Tensor& t, std::size_t channel_axis, float base_scale,
                                                int bits) {
  const AxisGeometry g = axis_geometry(t, channel_axis);
  ChannelwiseSelection sel;
  sel.base_scale = base_scale;
  sel.bits = bits;
  sel.indices.assign(g.channels, 0);

  std::vector<QuantParams> cands;
  for (int i = 0; i < ChannelwiseSelection::kCandidates; ++i) {
    cands.push_back(QuantParams{std::ldexp(base_scale, -i), 0, bits});
    cands.back().validate();
  }
  std::vector<double> err(g.channels * ChannelwiseSelection::kCandidates, 0.0);
  auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t c = channel_of(i, g);
    for (int k = 0; k < ChannelwiseSelection::kCandidates; ++k) {
      const double d = static_cast<double>(data[i]) -
                       static_cast<double>(static_cast<float>(quantize_value(data[i], cands[k])) * cands[k].scale);
      err[c * ChannelwiseSelection::kCandidates + k] += d * d;
    }
  }
  for (std::size_t c = 0; c < g.channels; ++c) {
    int best = 0;
    for (int k = 1; k < ChannelwiseSelection::kCandidates; ++k) {
      if (err[c * ChannelwiseSelection::kCandidates + k] < err[c * ChannelwiseSelection::kCandidates + best]) best = k;
    }
    sel.indices[c] = static_cast<std::uint8_t>(best);
  }
  return sel;
}

Tensor channelwise_fake_quantize(const Tensor& t, std::size_t channel_axis, const ChannelwiseSelection& sel) {
  const AxisGeometry g = axis_geometry(t, channel_axis);
  if (sel.indices.size() != g.channels) throw ShapeError("selection length does not match channel count");
  std::vector<float> out(t.size());
  auto data = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const QuantParams q{sel.channel_scale(channel_of(i, g)), 0, sel.bits};
    out[i] = static_cast<float>(quantize_value(data[i], q)) * q.scale;
  }
  return Tensor(t.shape(), std::move(out));
}

std::string OverheadReport::describe() const {
  std::ostringstream os;
  os << "channel-wise shift candidates: " << channelwise_bits_per_channel << " bits/channel ("
     << channelwise_total_bits() << " bits for " << channels << " channels); O-2SF mask: " << o2sf_bits_per_channel
     << " bit/channel (" << o2sf_total_bits() << " bits)";
  return os.str();
}

OverheadReport overhead_report(std::size_t channels) {
  OverheadReport r;
  r.channels = channels;
  return r;
}

}  // namespace tsq
