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
#include <filesystem>
#include <span>
#include <vector>

#include "tsq/quant.hpp"
#include "tsq/tensor.hpp"

namespace tsq {

/// Value-aware two-scale codec.
///
/// Each element is first quantized at an extended width with the fine step
/// `small_scale` (s_s). Codes below the region threshold keep their least
/// significant bits (region 0, step s_s); larger codes keep their most
/// significant bits after dropping `shift` (m) bits with rounding (region 1,
/// step s_l = 2^m * s_s). One region bit per element selects the step, so
/// every element costs exactly `bits` bits and re-aligning the two regions
/// is an integer left shift by m.
///
/// softmax: unsigned. Extended code has (b-1)+m bits, threshold 2^(b-1),
///          both regions store b-1 value bits.
/// gelu:    signed. Extended code has a sign plus (b-1)+m magnitude bits.
///          Region 0 holds |code| < 2^(b-2) as sign + (b-2) bits; region 1
///          holds only non-negative values as b-1 bits. Negatives beyond the
///          small range are clamped to -(2^(b-2) - 1).
enum class V2sfKind : std::uint8_t { softmax = 0, gelu = 1 };

const char* to_string(V2sfKind kind);
V2sfKind v2sf_kind_from_string(const std::string& s);

/// Best-performing shifts: 4 for post-softmax, 3 for post-GeLU.
constexpr int default_v2sf_shift(V2sfKind kind) { return kind == V2sfKind::softmax ? 4 : 3; }

struct V2sfParams {
  V2sfKind kind = V2sfKind::softmax;
  int bits = 8;
  int shift = 4;
  float small_scale = 1.0f;

  /// 2^shift * small_scale, exact in binary floating point.
  float large_scale() const;

  /// bits in [4, 16], shift >= 1, (bits-1)+shift <= 30, small_scale > 0.
  void validate() const;

  friend bool operator==(const V2sfParams&, const V2sfParams&) = default;
};

/// Bit accounting and thresholds derived from the parameters.
struct V2sfLayout {
  int region_bits = 1;
  int sign_bits = 0;          // gelu region 0 only
  int small_value_bits = 0;   // region 0 magnitude bits
  int large_value_bits = 0;   // region 1 magnitude bits
  int extended_magnitude_bits = 0;
  int extended_total_bits = 0;  // magnitude plus sign for gelu
  std::int64_t small_threshold = 0;
  std::int64_t full_code_min = 0;
  std::int64_t full_code_max = 0;
  std::int64_t stored_max = 0;

  int small_region_total() const { return region_bits + sign_bits + small_value_bits; }
  int large_region_total() const { return region_bits + large_value_bits; }
};

V2sfLayout v2sf_layout(const V2sfParams& p);

/// Bits stored per element. Equal to p.bits for both regions and both kinds.
int v2sf_bits_per_element(const V2sfParams& p);

struct V2sfCode {
  std::uint8_t region = 0;
  bool negative = false;
  std::uint32_t stored = 0;

  friend bool operator==(const V2sfCode&, const V2sfCode&) = default;
};

/// Extended-width code: clamp(round(x / s_s), full_code_min, full_code_max).
std::int64_t v2sf_full_code(float x, const V2sfParams& p);
V2sfCode v2sf_code_from_full(std::int64_t full_code, const V2sfParams& p);
/// Throws DataError for a negative softmax input.
V2sfCode v2sf_encode_value(float x, const V2sfParams& p);

/// Signed value in units of s_s: stored for region 0, stored << m for region 1.
std::int64_t v2sf_aligned_code(const V2sfCode& c, const V2sfParams& p);
float v2sf_decode_value(const V2sfCode& c, const V2sfParams& p);

/// b-bit word, region bit in the MSB.
std::uint32_t v2sf_pack_word(const V2sfCode& c, const V2sfParams& p);
V2sfCode v2sf_unpack_word(std::uint32_t word, const V2sfParams& p);

/// True for codes the encoder can emit. Non-canonical words (a negative
/// zero, or a region-1 value below the threshold) still decode, but
/// re-encode to the canonical code holding the same value.
bool v2sf_is_canonical(const V2sfCode& c, const V2sfParams& p);
/// All canonical codes in increasing decoded-value order.
std::vector<V2sfCode> v2sf_canonical_codes(const V2sfParams& p);

struct V2sfEncoded {
  Shape shape;
  std::vector<std::uint8_t> payload;
  V2sfParams params;

  std::size_t element_count() const { return tsq::element_count(shape); }
};

V2sfEncoded v2sf_encode(const Tensor& t, const V2sfParams& p);
/// Throws FormatError if the payload length does not match the shape.
Tensor v2sf_decode(const V2sfEncoded& e);
std::vector<V2sfCode> v2sf_unpack(const V2sfEncoded& e);
/// Per-element aligned integer codes (units of s_s), for integer matmuls.
std::vector<std::int32_t> v2sf_aligned_codes(const V2sfEncoded& e);

/// Element-wise encode then decode without packing.
Tensor v2sf_fake_quantize(const Tensor& t, const V2sfParams& p);
std::vector<std::int32_t> v2sf_aligned_codes(const Tensor& t, const V2sfParams& p);

/// "V2SF1" container: 'V2SF', u8 version=1, u8 kind, u8 bits, u8 shift,
/// f32 small_scale, u8 rank, u32 dims, then the packed payload. All
/// multi-byte fields little-endian.
std::vector<std::uint8_t> serialize_v2sf(const V2sfEncoded& e);
V2sfEncoded parse_v2sf(std::span<const std::uint8_t> bytes);
void save_v2sf(const V2sfEncoded& e, const std::filesystem::path& path);
V2sfEncoded load_v2sf(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Fixed twin-region baseline used for comparison.
//
// softmax: R1 = [0, 2^(b-1) s_R1) with s_R1 = 2^-m s_R2, R2 = the rest with
//          the fixed s_R2 = 1 / 2^(b-1). Each region has b-1 value bits.
// gelu:    negatives use s_R1 = 2^-m s_R2, non-negatives use s_R2.

struct TwinRegionParams {
  V2sfKind kind = V2sfKind::softmax;
  int bits = 8;
  int shift = 4;
  float r2_scale = 1.0f;

  float r1_scale() const;
  void validate() const;
};

/// Softmax parameters with the fixed s_R2 = 1 / 2^(b-1).
TwinRegionParams twin_region_softmax_params(int bits, int shift);

struct TwinRegionQuantized {
  /// Codes of elements outside a region are zero in that region's tensor.
  QuantizedTensor region1;
  QuantizedTensor region2;
  std::vector<std::uint8_t> in_region2;
  TwinRegionParams params;
};

TwinRegionQuantized baseline_twin_region_encode(const Tensor& t, const TwinRegionParams& p);
Tensor twin_region_decode(const TwinRegionQuantized& q);
Tensor twin_region_fake_quantize(const Tensor& t, const TwinRegionParams& p);

/// Number of distinct R2 codes in [0, 2^(b-1)) that at least one element uses.
std::size_t twin_region_r2_bins_used(const TwinRegionQuantized& q);

}  // namespace tsq
