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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tsq {

/// Appends fixed-width words to a byte stream, most significant bit first.
/// Stream bit j lives in byte j / 8 at bit position 7 - j % 8; the final
/// partial byte is zero-padded.
class BitWriter {
 public:
  void write(std::uint32_t word, int width) {
    for (int i = width - 1; i >= 0; --i) {
      if (bit_ % 8 == 0) bytes_.push_back(0);
      if ((word >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bit_ % 8));
      ++bit_;
    }
  }

  std::size_t bit_count() const { return bit_; }
  std::vector<std::uint8_t> take() && { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bit_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  /// Caller guarantees enough bits remain.
  std::uint32_t read(int width) {
    std::uint32_t word = 0;
    for (int i = 0; i < width; ++i) {
      const std::uint8_t byte = bytes_[bit_ / 8];
      word = (word << 1) | ((byte >> (7 - bit_ % 8)) & 1u);
      ++bit_;
    }
    return word;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t bit_ = 0;
};

constexpr std::size_t packed_byte_count(std::size_t elements, int width) {
  return (elements * static_cast<std::size_t>(width) + 7) / 8;
}

}  // namespace tsq
