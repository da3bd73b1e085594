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

#include <fstream>
#include <iterator>

#include "support.hpp"
#include "tsq/bundle_io.hpp"
#include "tsq/errors.hpp"
#include "tsq/npy.hpp"
#include "tsq/tensor.hpp"

using namespace tsq;

namespace {

const std::filesystem::path kData = TSQ_TEST_DATA;

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  CHECK(element_count({}) == 1);
  CHECK(element_count({0, 5}) == 0);
  CHECK(element_count({2, 3, 4}) == 24);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), ShapeError);
  const Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("load numpy-written fixtures") {
  const Tensor a = load_tensor(kData / "f32_2x2.npy");
  CHECK(a.shape() == Shape{2, 2});
  CHECK(a.values() == std::vector<float>{0, 1, 2, 3});

  const Tensor s = load_tensor(kData / "f32_scalar.npy");
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s[0] == 1.5f);

  const Tensor e = load_tensor(kData / "f32_empty.npy");
  CHECK(e.shape() == Shape{0, 5});
  CHECK(e.size() == 0);

  // f64 payloads are narrowed with round-to-nearest.
  const Tensor d = load_tensor(kData / "f64_2x3.npy");
  CHECK(d.shape() == Shape{2, 3});
  CHECK(d[1] == static_cast<float>(1.0 / 3.0));
  CHECK(d[5] == static_cast<float>(5.0 / 3.0));
}

TEST_CASE("save reproduces numpy bytes for f32 files") {
  for (const char* name : {"f32_2x2.npy", "f32_rand_3d.npy", "f32_scalar.npy", "f32_empty.npy", "f32_vec.npy"}) {
    CAPTURE(name);
    const auto bytes = read_bytes(kData / name);
    CHECK(serialize_npy(parse_npy(bytes)) == bytes);
  }
}

TEST_CASE("unsupported or invalid files are rejected") {
  CHECK_THROWS_AS(load_tensor(kData / "fortran.npy"), FormatError);
  CHECK_THROWS_AS(load_tensor(kData / "int32.npy"), FormatError);
  CHECK_THROWS_AS(load_tensor(kData / "nan.npy"), ValidationError);
  CHECK_THROWS_AS(parse_npy(std::vector<char>{'n', 'o', 'p', 'e'}), FormatError);
  auto bytes = read_bytes(kData / "f32_2x2.npy");
  bytes.pop_back();
  CHECK_THROWS_AS(parse_npy(bytes), FormatError);
  CHECK_THROWS(load_tensor(kData / "does_not_exist.npy"));
}

TEST_CASE("random tensors round-trip bit-exactly and serialize stably") {
  Rng rng(11);
  const auto dir = testing::scratch_dir("npy_rt");
  for (int trial = 0; trial < 20; ++trial) {
    const Shape shape{1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(3)};
    const Tensor t = testing::normal_tensor(rng, shape);
    const auto path = dir / "t.npy";
    save_tensor(t, path);
    const auto first = read_bytes(path);
    const Tensor back = load_tensor(path);
    CHECK(back == t);
    save_tensor(back, path);
    CHECK(read_bytes(path) == first);
    CHECK(first.size() % 64 == (t.size() * 4) % 64);
  }
}

TEST_CASE("elementwise stats") {
  const Tensor t({2, 2}, {1, -3, 2, 0.5f});
  const SliceStats cols = elementwise_stats(t, 1);
  CHECK(cols.abs_max == std::vector<float>{2, 3});
  CHECK(cols.min == std::vector<float>{1, -3});
  CHECK(cols.max == std::vector<float>{2, 0.5f});
  CHECK(elementwise_stats(Tensor({3, 4}), 0).abs_max == std::vector<float>{0, 0, 0});
  CHECK_THROWS_AS(elementwise_stats(t, 2), DataError);
  CHECK_THROWS_AS(elementwise_stats(Tensor({0, 3})), DataError);

  // Independent per-column scan over a random (8, 64) tensor.
  Rng rng(3);
  const Tensor r = testing::normal_tensor(rng, {8, 64});
  const SliceStats s = elementwise_stats(r, 1);
  float overall = 0.0f;
  for (std::size_t c = 0; c < 64; ++c) {
    float m = 0.0f;
    for (std::size_t row = 0; row < 8; ++row) m = std::max(m, std::fabs(r[row * 64 + c]));
    CHECK(s.abs_max[c] == m);
    overall = std::max(overall, m);
  }
  CHECK(elementwise_stats(r).abs_max[0] == overall);
}

TEST_CASE("bundle directory round-trip with manifest") {
  const auto dir = testing::scratch_dir("bundle");
  TensorBundle b;
  b.insert("block0.post_softmax", Tensor({2, 2}, {0.25f, 0.75f, 0.5f, 0.5f}));
  b.insert("block0.post_softmax.grad", Tensor({2, 2}, {1, 2, 3, 4}));
  b.insert("block0.ln1_input", Tensor({3}, {1, 2, 3}));
  BundleManifest m;
  m.model = "toy";
  m.sites = {"post_softmax", "ln1_input"};
  m.sample_count = 2;
  m.seed = 9;
  save_bundle(b, dir, m);

  BundleManifest back;
  const TensorBundle loaded = load_bundle(dir, &back);
  CHECK(loaded.names() == b.names());
  for (const auto& name : b.names()) CHECK(loaded.at(name) == b.at(name));
  CHECK(back.model == "toy");
  CHECK(back.seed == 9);
  CHECK(back.files.at("block0.ln1_input") == "block0.ln1_input.npy");

  std::filesystem::remove(dir / "block0.ln1_input.npy");
  std::filesystem::remove(dir / "block0.post_softmax.npy");
  try {
    load_bundle(dir);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("block0.ln1_input.npy") != std::string::npos);
    CHECK(msg.find("block0.post_softmax.npy") != std::string::npos);
  }
  CHECK_THROWS_AS(load_bundle(testing::scratch_dir("no_manifest")), DataError);
}

TEST_CASE("gradient shapes must match their base tensor") {
  TensorBundle b;
  b.insert("x", Tensor({2, 2}));
  b.insert("x.grad", Tensor({4}));
  CHECK_THROWS_AS(b.validate(), ShapeError);
}
