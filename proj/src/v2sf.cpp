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

#include "tsq/v2sf.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include "tsq/bitpack.hpp"
#include "tsq/errors.hpp"

namespace tsq {

const char* to_string(V2sfKind kind) { return kind == V2sfKind::softmax ? "softmax" : "gelu"; }

V2sfKind v2sf_kind_from_string(const std::string& s) {
  if (s == "softmax") return V2sfKind::softmax;
  if (s == "gelu") return V2sfKind::gelu;
  throw ValidationError("unknown V-2SF kind '" + s + "'");
}

float V2sfParams::large_scale() const { return std::ldexp(small_scale, shift); }

void V2sfParams::validate() const {
  if (bits < 4 || bits > 16) throw ValidationError("V-2SF bit width must be in [4, 16]");
  if (shift < 1) throw ValidationError("V-2SF shift must be >= 1");
  if ((bits - 1) + shift > 30) throw ValidationError("V-2SF extended code exceeds 32-bit intermediates");
  if (!(small_scale > 0.0f) || !std::isfinite(small_scale) || !std::isfinite(large_scale())) {
    throw ValidationError("V-2SF small scale must be positive and finite");
  }
}

V2sfLayout v2sf_layout(const V2sfParams& p) {
  V2sfLayout l;
  l.extended_magnitude_bits = (p.bits - 1) + p.shift;
  l.full_code_max = (std::int64_t{1} << l.extended_magnitude_bits) - 1;
  l.large_value_bits = p.bits - 1;
  l.stored_max = (std::int64_t{1} << (p.bits - 1)) - 1;
  if (p.kind == V2sfKind::softmax) {
    l.sign_bits = 0;
    l.small_value_bits = p.bits - 1;
    l.extended_total_bits = l.extended_magnitude_bits;
    l.small_threshold = std::int64_t{1} << (p.bits - 1);
    l.full_code_min = 0;
  } else {
    l.sign_bits = 1;
    l.small_value_bits = p.bits - 2;
    l.extended_total_bits = l.extended_magnitude_bits + 1;
    l.small_threshold = std::int64_t{1} << (p.bits - 2);
    l.full_code_min = -(l.small_threshold - 1);
  }
  return l;
}

int v2sf_bits_per_element(const V2sfParams& p) {
  const V2sfLayout l = v2sf_layout(p);
  if (l.small_region_total() != p.bits || l.large_region_total() != p.bits) {
    throw NumericalError("V-2SF layout does not add up to the target width");
  }
  return p.bits;
}

std::int64_t v2sf_full_code(float x, const V2sfParams& p) {
  const V2sfLayout l = v2sf_layout(p);
  const double q = round_half_away(static_cast<double>(x) / static_cast<double>(p.small_scale));
  return static_cast<std::int64_t>(
      std::clamp(q, static_cast<double>(l.full_code_min), static_cast<double>(l.full_code_max)));
}

V2sfCode v2sf_code_from_full(std::int64_t full, const V2sfParams& p) {
  const V2sfLayout l = v2sf_layout(p);
  full = std::clamp(full, l.full_code_min, l.full_code_max);
  const std::int64_t magnitude = full < 0 ? -full : full;
  if (magnitude < l.small_threshold) {
    return V2sfCode{0, full < 0, static_cast<std::uint32_t>(magnitude)};
  }
  // Only non-negative codes reach here. Round half away from zero on the
  // dropped bits, then saturate.
  const std::int64_t half = std::int64_t{1} << (p.shift - 1);
  const std::int64_t rounded = std::min((full + half) >> p.shift, l.stored_max);
  return V2sfCode{1, false, static_cast<std::uint32_t>(rounded)};
}

V2sfCode v2sf_encode_value(float x, const V2sfParams& p) {
  if (p.kind == V2sfKind::softmax && x < 0.0f) {
    throw DataError("V-2SF softmax input must be non-negative, got " + std::to_string(x));
  }
  return v2sf_code_from_full(v2sf_full_code(x, p), p);
}

std::int64_t v2sf_aligned_code(const V2sfCode& c, const V2sfParams& p) {
  const std::int64_t magnitude =
      c.region ? (static_cast<std::int64_t>(c.stored) << p.shift) : static_cast<std::int64_t>(c.stored);
  return c.negative ? -magnitude : magnitude;
}

float v2sf_decode_value(const V2sfCode& c, const V2sfParams& p) {
  return static_cast<float>(v2sf_aligned_code(c, p)) * p.small_scale;
}

std::uint32_t v2sf_pack_word(const V2sfCode& c, const V2sfParams& p) {
  const std::uint32_t region = static_cast<std::uint32_t>(c.region & 1u) << (p.bits - 1);
  if (p.kind == V2sfKind::gelu && c.region == 0) {
    return region | (static_cast<std::uint32_t>(c.negative) << (p.bits - 2)) | c.stored;
  }
  return region | c.stored;
}

V2sfCode v2sf_unpack_word(std::uint32_t word, const V2sfParams& p) {
  V2sfCode c;
  c.region = static_cast<std::uint8_t>((word >> (p.bits - 1)) & 1u);
  if (p.kind == V2sfKind::gelu && c.region == 0) {
    c.negative = ((word >> (p.bits - 2)) & 1u) != 0;
    c.stored = word & ((1u << (p.bits - 2)) - 1u);
  } else {
    c.stored = word & ((1u << (p.bits - 1)) - 1u);
  }
  return c;
}

bool v2sf_is_canonical(const V2sfCode& c, const V2sfParams& p) {
  const V2sfLayout l = v2sf_layout(p);
  if (c.region == 0) {
    if (c.stored >= l.small_threshold) return false;
    if (c.negative && (p.kind == V2sfKind::softmax || c.stored == 0)) return false;
    return true;
  }
  if (c.region != 1 || c.negative) return false;
  if (c.stored > l.stored_max) return false;
  return (static_cast<std::int64_t>(c.stored) << p.shift) >= l.small_threshold;
}

std::vector<V2sfCode> v2sf_canonical_codes(const V2sfParams& p) {
  const V2sfLayout l = v2sf_layout(p);
  std::vector<V2sfCode> out;
  if (p.kind == V2sfKind::gelu) {
    for (std::int64_t m = l.small_threshold - 1; m >= 1; --m) out.push_back({0, true, static_cast<std::uint32_t>(m)});
  }
  for (std::int64_t m = 0; m < l.small_threshold; ++m) out.push_back({0, false, static_cast<std::uint32_t>(m)});
  const std::int64_t step = std::int64_t{1} << p.shift;
  const std::int64_t first = (l.small_threshold + step - 1) / step;
  for (std::int64_t s = first; s <= l.stored_max; ++s) out.push_back({1, false, static_cast<std::uint32_t>(s)});
  return out;
}

V2sfEncoded v2sf_encode(const Tensor& t, const V2sfParams& p) {
  p.validate();
  BitWriter writer;
  for (float x : t.data()) writer.write(v2sf_pack_word(v2sf_encode_value(x, p), p), p.bits);
  return V2sfEncoded{t.shape(), std::move(writer).take(), p};
}

std::vector<V2sfCode> v2sf_unpack(const V2sfEncoded& e) {
  e.params.validate();
  const std::size_t n = e.element_count();
  if (e.payload.size() != packed_byte_count(n, e.params.bits)) {
    throw FormatError("V-2SF payload has " + std::to_string(e.payload.size()) + " bytes, expected " +
                      std::to_string(packed_byte_count(n, e.params.bits)));
  }
  BitReader reader(e.payload);
  std::vector<V2sfCode> codes(n);
  for (auto& c : codes) c = v2sf_unpack_word(reader.read(e.params.bits), e.params);
  return codes;
}

Tensor v2sf_decode(const V2sfEncoded& e) {
  const auto codes = v2sf_unpack(e);
  std::vector<float> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = v2sf_decode_value(codes[i], e.params);
  return Tensor(e.shape, std::move(out));
}

std::vector<std::int32_t> v2sf_aligned_codes(const V2sfEncoded& e) {
  const auto codes = v2sf_unpack(e);
  std::vector<std::int32_t> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i] = static_cast<std::int32_t>(v2sf_aligned_code(codes[i], e.params));
  }
  return out;
}

Tensor v2sf_fake_quantize(const Tensor& t, const V2sfParams& p) {
  p.validate();
  std::vector<float> out(t.size());
  auto data = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v2sf_decode_value(v2sf_encode_value(data[i], p), p);
  return Tensor(t.shape(), std::move(out));
}

std::vector<std::int32_t> v2sf_aligned_codes(const Tensor& t, const V2sfParams& p) {
  p.validate();
  std::vector<std::int32_t> out(t.size());
  auto data = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::int32_t>(v2sf_aligned_code(v2sf_encode_value(data[i], p), p));
  }
  return out;
}

namespace {

constexpr char kV2sfMagic[4] = {'V', '2', 'S', 'F'};
constexpr std::uint8_t kV2sfVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw FormatError("V2SF1 header truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_v2sf(const V2sfEncoded& e) {
  static_assert(std::endian::native == std::endian::little);
  if (e.shape.size() > 255) throw DataError("V2SF1 supports rank <= 255");
  std::vector<std::uint8_t> out(kV2sfMagic, kV2sfMagic + 4);
  out.push_back(kV2sfVersion);
  out.push_back(static_cast<std::uint8_t>(e.params.kind));
  out.push_back(static_cast<std::uint8_t>(e.params.bits));
  out.push_back(static_cast<std::uint8_t>(e.params.shift));
  put_le(out, e.params.small_scale);
  out.push_back(static_cast<std::uint8_t>(e.shape.size()));
  for (auto d : e.shape) {
    if (d > 0xffffffffu) throw DataError("V2SF1 dimension exceeds u32");
    put_le(out, static_cast<std::uint32_t>(d));
  }
  out.insert(out.end(), e.payload.begin(), e.payload.end());
  return out;
}

V2sfEncoded parse_v2sf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kV2sfMagic, kV2sfMagic + 4, bytes.begin())) {
    throw FormatError("not a V2SF1 file: bad magic");
  }
  std::size_t pos = 4;
  const auto version = get_le<std::uint8_t>(bytes, pos);
  if (version != kV2sfVersion) throw FormatError("unsupported V2SF version " + std::to_string(version));
  V2sfEncoded e;
  const auto kind = get_le<std::uint8_t>(bytes, pos);
  if (kind > 1) throw FormatError("bad V2SF kind " + std::to_string(kind));
  e.params.kind = static_cast<V2sfKind>(kind);
  e.params.bits = get_le<std::uint8_t>(bytes, pos);
  e.params.shift = get_le<std::uint8_t>(bytes, pos);
  e.params.small_scale = get_le<float>(bytes, pos);
  const auto rank = get_le<std::uint8_t>(bytes, pos);
  for (std::uint8_t i = 0; i < rank; ++i) e.shape.push_back(get_le<std::uint32_t>(bytes, pos));
  try {
    e.params.validate();
  } catch (const ValidationError& err) {
    throw FormatError(std::string("V2SF1 header: ") + err.what());
  }
  e.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  if (e.payload.size() != packed_byte_count(e.element_count(), e.params.bits)) {
    throw FormatError("V2SF1 payload length mismatch");
  }
  return e;
}

void save_v2sf(const V2sfEncoded& e, const std::filesystem::path& path) {
  const auto bytes = serialize_v2sf(e);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

V2sfEncoded load_v2sf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_v2sf(bytes);
}

// --- twin-region baseline ---------------------------------------------------

float TwinRegionParams::r1_scale() const { return std::ldexp(r2_scale, -shift); }

void TwinRegionParams::validate() const {
  if (bits < 2 || bits > 16) throw ValidationError("twin-region bit width must be in [2, 16]");
  if (shift < 0) throw ValidationError("twin-region shift must be >= 0");
  if (!(r2_scale > 0.0f) || !std::isfinite(r2_scale) || !(r1_scale() > 0.0f)) {
    throw ValidationError("twin-region scale must be positive and finite");
  }
}

TwinRegionParams twin_region_softmax_params(int bits, int shift) {
  return TwinRegionParams{V2sfKind::softmax, bits, shift, std::ldexp(1.0f, -(bits - 1))};
}

TwinRegionQuantized baseline_twin_region_encode(const Tensor& t, const TwinRegionParams& p) {
  p.validate();
  const QuantParams q1{p.r1_scale(), 0, p.bits};
  const QuantParams q2{p.r2_scale, 0, p.bits};
  TwinRegionQuantized out{QuantizedTensor{t.shape(), std::vector<std::int32_t>(t.size(), 0), q1},
                          QuantizedTensor{t.shape(), std::vector<std::int32_t>(t.size(), 0), q2},
                          std::vector<std::uint8_t>(t.size(), 0), p};
  const double boundary = std::ldexp(static_cast<double>(p.r1_scale()), p.bits - 1);
  const std::int32_t top = static_cast<std::int32_t>(code_max(p.bits));
  auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float x = data[i];
    bool region2 = false;
    if (p.kind == V2sfKind::softmax) {
      if (x < 0.0f) throw DataError("twin-region softmax input must be non-negative");
      region2 = static_cast<double>(x) >= boundary;
    } else {
      region2 = x >= 0.0f;
    }
    if (region2) {
      out.in_region2[i] = 1;
      out.region2.codes[i] = std::clamp(quantize_value(x, q2), 0, top);
    } else if (p.kind == V2sfKind::softmax) {
      out.region1.codes[i] = std::clamp(quantize_value(x, q1), 0, top);
    } else {
      out.region1.codes[i] = std::clamp(quantize_value(x, q1), static_cast<std::int32_t>(code_min(p.bits)), 0);
    }
  }
  return out;
}

Tensor twin_region_decode(const TwinRegionQuantized& q) {
  const std::size_t n = q.in_region2.size();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = q.in_region2[i] ? static_cast<float>(q.region2.codes[i]) * q.region2.params.scale
                             : static_cast<float>(q.region1.codes[i]) * q.region1.params.scale;
  }
  return Tensor(q.region1.shape, std::move(out));
}

Tensor twin_region_fake_quantize(const Tensor& t, const TwinRegionParams& p) {
  return twin_region_decode(baseline_twin_region_encode(t, p));
}

std::size_t twin_region_r2_bins_used(const TwinRegionQuantized& q) {
  std::set<std::int32_t> used;
  for (std::size_t i = 0; i < q.in_region2.size(); ++i) {
    if (q.in_region2[i]) used.insert(q.region2.codes[i]);
  }
  return used.size();
}

}  // namespace tsq
