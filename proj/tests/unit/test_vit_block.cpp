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

#include "support.hpp"
#include "tsq/bundle_io.hpp"
#include "tsq/errors.hpp"
#include "tsq/vit_block.hpp"

using namespace tsq;

namespace {

// Golden digest of fp_forward for seed 42 at d=16, h=2, n=8.
constexpr std::uint64_t kGoldenDigest = 2359059386863633659ull;

}  // namespace

TEST_CASE("zero weights and input give uniform attention") {
  const BlockSpec spec;
  BlockWeights w = init_block_weights(spec);
  for (Tensor* t : {&w.qkv_weight, &w.qkv_bias, &w.proj_weight, &w.proj_bias, &w.fc1_weight, &w.fc1_bias,
                    &w.fc2_weight, &w.fc2_bias}) {
    *t = Tensor(t->shape());
  }
  TensorBundle cap;
  const Tensor x({spec.seq_len, spec.embed_dim});
  fp_forward(spec, w, x, &cap);
  for (const float v : cap.at(bundle_name(site::attention_logits)).values()) CHECK(v == 0.0f);
  for (const float v : cap.at(bundle_name(site::post_softmax)).values()) CHECK(v == doctest::Approx(1.0 / 8));
}

TEST_CASE("softmax rows sum to one and captures cover every site") {
  const BlockSpec spec;
  const BlockWeights w = init_block_weights(spec);
  TensorBundle cap;
  const Tensor x = synthetic_input(spec, 3);
  const Tensor y = fp_forward(spec, w, x, &cap);
  CHECK(y.shape() == Shape{spec.seq_len, spec.embed_dim});
  for (const auto& s : capture_sites()) CHECK(cap.contains(bundle_name(s)));
  const Tensor& p = cap.at(bundle_name(site::post_softmax));
  CHECK(p.shape() == Shape{spec.heads, spec.seq_len, spec.seq_len});
  for (std::size_t r = 0; r < p.size() / spec.seq_len; ++r) {
    double sum = 0;
    for (std::size_t j = 0; j < spec.seq_len; ++j) sum += p[r * spec.seq_len + j];
    CHECK(std::fabs(sum - 1.0) <= 1e-6);
  }
  CHECK(cap.at(bundle_name(site::block_output)) == y);
}

TEST_CASE("building blocks against direct formulas") {
  // 2x3 times 3x2 plus bias.
  const std::vector<float> a{1, 2, 3, 4, 5, 6}, b{1, 0, 0, 1, 1, 1}, bias{0.5f, -0.5f};
  CHECK(matmul(a, b, 2, 3, 2, bias) == std::vector<float>{4.5f, 4.5f, 10.5f, 10.5f});

  const std::vector<float> row{1, 2, 3, 4}, g{1, 1, 1, 1}, z{0, 0, 0, 0};
  const auto ln = layer_norm(row, 1, 4, g, z, 0.0f);
  const double sd = std::sqrt(1.25);
  for (int i = 0; i < 4; ++i) CHECK(ln[i] == doctest::Approx((i + 1 - 2.5) / sd).epsilon(1e-6));

  CHECK(gelu(0.0f) == 0.0f);
  CHECK(gelu(1.0f) == doctest::Approx(0.5 * (1 + std::erf(1 / std::sqrt(2.0)))).epsilon(1e-6));
  CHECK(gelu(-10.0f) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("forward is deterministic and matches the golden digest") {
  BlockSpec spec;
  spec.seed = 42;
  const BlockWeights w = init_block_weights(spec);
  const Tensor x = synthetic_input(spec, 42);
  const Tensor y1 = fp_forward(spec, w, x);
  const Tensor y2 = fp_forward(spec, w, x);
  CHECK(y1 == y2);
  CHECK(tensor_digest(y1) == kGoldenDigest);
}

TEST_CASE("batched forward stacks per-sample captures") {
  const BlockSpec spec;
  const BlockWeights w = init_block_weights(spec);
  const Tensor batch = synthetic_batch(spec, 5, 3);
  CHECK(batch.shape() == Shape{3, spec.seq_len, spec.embed_dim});
  TensorBundle cap;
  const Tensor y = fp_forward_batch(spec, w, batch, &cap);
  for (std::size_t i = 0; i < 3; ++i) {
    TensorBundle one;
    CHECK(sample_slice(y, i) == fp_forward(spec, w, sample_slice(batch, i), &one));
    CHECK(sample_slice(cap.at(bundle_name(site::post_gelu)), i) == one.at(bundle_name(site::post_gelu)));
  }
}

TEST_CASE("weights survive a bundle round trip") {
  const BlockSpec spec;
  const BlockWeights w = init_block_weights(spec);
  TensorBundle b;
  add_weights_to_bundle(w, b);
  const auto dir = testing::scratch_dir("weights");
  BundleManifest m;
  save_bundle(b, dir, m);
  const BlockWeights back = weights_from_bundle(load_bundle(dir), spec);
  CHECK(back.qkv_weight == w.qkv_weight);
  CHECK(back.fc2_bias == w.fc2_bias);
  const Tensor x = synthetic_input(spec, 1);
  CHECK(fp_forward(spec, back, x) == fp_forward(spec, w, x));

  BlockSpec wrong = spec;
  wrong.embed_dim = 32;
  CHECK_THROWS_AS(weights_from_bundle(b, wrong), ShapeError);
}
