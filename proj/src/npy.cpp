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

#include "tsq/npy.hpp"

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "tsq/errors.hpp"

namespace tsq {

static_assert(std::endian::native == std::endian::little, "npy codec assumes a little-endian host");

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPreludeLen = 10;  // magic + version + u16 header length

struct Header {
  std::string descr;
  bool fortran_order = false;
  Shape shape;
};

// Minimal reader for the python dict literal numpy writes into the header.
class DictParser {
 public:
  explicit DictParser(std::string_view text) : s_(text) {}

  Header parse() {
    Header h;
    bool have_descr = false, have_order = false, have_shape = false;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') break;
      const auto key = parse_string();
      expect(':');
      if (key == "descr") {
        h.descr = parse_string();
        have_descr = true;
      } else if (key == "fortran_order") {
        h.fortran_order = parse_bool();
        have_order = true;
      } else if (key == "shape") {
        h.shape = parse_shape();
        have_shape = true;
      } else {
        throw FormatError("npy header: unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws();
      if (peek() != '}') throw FormatError("npy header: expected ',' or '}'");
    }
    if (!have_descr || !have_order || !have_shape) throw FormatError("npy header: missing required key");
    return h;
  }

 private:
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) throw FormatError(std::string("npy header: expected '") + c + "'");
    ++pos_;
  }

  std::string parse_string() {
    skip_ws();
    const char quote = peek();
    if (quote != '\'' && quote != '"') throw FormatError("npy header: expected string literal");
    ++pos_;
    const auto end = s_.find(quote, pos_);
    if (end == std::string_view::npos) throw FormatError("npy header: unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  bool parse_bool() {
    skip_ws();
    if (s_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    throw FormatError("npy header: expected True or False");
  }

  Shape parse_shape() {
    Shape shape;
    expect('(');
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        break;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) throw FormatError("npy header: bad shape entry");
      std::size_t v = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        v = v * 10 + static_cast<std::size_t>(peek() - '0');
        ++pos_;
      }
      // Some writers emit 3L for python 2 longs.
      if (peek() == 'L') ++pos_;
      shape.push_back(v);
      skip_ws();
      if (peek() == ',') ++pos_;
    }
    return shape;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string header_text(const Tensor& t) {
  std::string shape = "(";
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i) shape += ", ";
    shape += std::to_string(t.shape()[i]);
  }
  if (t.rank() == 1) shape += ",";
  shape += ")";
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape + ", }";
  // Pad with spaces so prelude + dict + '\n' is a multiple of 64.
  const std::size_t unpadded = kPreludeLen + dict.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');
  return dict;
}

}  // namespace

Tensor parse_npy(const std::vector<char>& bytes) {
  if (bytes.size() < kPreludeLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError("not a npy file: bad magic");
  }
  const auto major = static_cast<std::uint8_t>(bytes[6]);
  const auto minor = static_cast<std::uint8_t>(bytes[7]);
  if (major != 1 || minor != 0) {
    throw FormatError("unsupported npy version " + std::to_string(major) + "." + std::to_string(minor));
  }
  std::uint16_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, sizeof(header_len));
  if (bytes.size() < kPreludeLen + header_len) throw FormatError("npy header truncated");

  const std::string_view text(bytes.data() + kPreludeLen, header_len);
  const Header h = DictParser(text).parse();
  if (h.fortran_order) throw FormatError("fortran_order=True is not supported");

  std::size_t word = 0;
  if (h.descr == "<f4") {
    word = 4;
  } else if (h.descr == "<f8") {
    word = 8;
  } else {
    throw FormatError("unsupported dtype descr '" + h.descr + "'");
  }

  const std::size_t count = element_count(h.shape);
  const std::size_t offset = kPreludeLen + header_len;
  if (bytes.size() - offset != count * word) {
    throw FormatError("npy payload has " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                      std::to_string(count * word));
  }

  std::vector<float> data(count);
  if (word == 4) {
    std::memcpy(data.data(), bytes.data() + offset, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      double v;
      std::memcpy(&v, bytes.data() + offset + i * 8, 8);
      data[i] = static_cast<float>(v);
    }
  }
  Tensor t(h.shape, std::move(data));
  t.validate_finite();
  return t;
}

std::vector<char> serialize_npy(const Tensor& t) {
  const std::string header = header_text(t);
  std::vector<char> out;
  out.reserve(kPreludeLen + header.size() + t.size() * 4);
  out.insert(out.end(), kMagic, kMagic + kMagicLen);
  out.push_back(1);
  out.push_back(0);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.push_back(static_cast<char>(len & 0xff));
  out.push_back(static_cast<char>(len >> 8));
  out.insert(out.end(), header.begin(), header.end());
  const auto* raw = reinterpret_cast<const char*>(t.data().data());
  out.insert(out.end(), raw, raw + t.size() * 4);
  return out;
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_npy(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = serialize_npy(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace tsq
