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

#include "tsq/vit_block.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <set>

#include "tsq/errors.hpp"
#include "tsq/rng.hpp"

namespace tsq {

void BlockSpec::validate() const {
  if (embed_dim == 0 || heads == 0 || seq_len == 0 || mlp_ratio == 0) {
    throw ValidationError("block dimensions must be >= 1");
  }
  if (embed_dim % heads != 0) throw ValidationError("embed_dim must be divisible by heads");
  if (!(ln_eps > 0.0f)) throw ValidationError("ln_eps must be positive");
}

const std::vector<std::string>& capture_sites() {
  static const std::vector<std::string> sites = {
      site::ln1_input,  site::ln1_output, site::qkv_output, site::query,        site::key,
      site::value,      site::attention_logits, site::post_softmax, site::attn_context, site::proj_output,
      site::ln2_input,  site::ln2_output, site::fc1_output, site::post_gelu,    site::fc2_output,
      site::block_output};
  return sites;
}

std::string bundle_name(const std::string& s) { return std::string(kBlockPrefix) + s; }

namespace {

Tensor uniform_tensor(Rng& rng, Shape shape, float lo, float hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor filled(Shape shape, float v) {
  Tensor t(std::move(shape));
  for (auto& x : t.mutable_data()) x = v;
  return t;
}

}  // namespace

BlockWeights init_block_weights(const BlockSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t d = spec.embed_dim, hid = spec.hidden_dim();
  const float wr = 0.5f / std::sqrt(static_cast<float>(d));
  const float br = 0.05f;
  BlockWeights w;
  w.ln1_gamma = filled({d}, 1.0f);
  w.ln1_beta = filled({d}, 0.0f);
  w.qkv_weight = uniform_tensor(rng, {d, 3 * d}, -wr, wr);
  w.qkv_bias = uniform_tensor(rng, {3 * d}, -br, br);
  w.proj_weight = uniform_tensor(rng, {d, d}, -wr, wr);
  w.proj_bias = uniform_tensor(rng, {d}, -br, br);
  w.ln2_gamma = filled({d}, 1.0f);
  w.ln2_beta = filled({d}, 0.0f);
  w.fc1_weight = uniform_tensor(rng, {d, hid}, -wr, wr);
  w.fc1_bias = uniform_tensor(rng, {hid}, -br, br);
  w.fc2_weight = uniform_tensor(rng, {hid, d}, -wr, wr);
  w.fc2_bias = uniform_tensor(rng, {d}, -br, br);
  return w;
}

void add_weights_to_bundle(const BlockWeights& w, TensorBundle& b) {
  b.insert("block0.ln1.gamma", w.ln1_gamma);
  b.insert("block0.ln1.beta", w.ln1_beta);
  b.insert("block0.qkv.weight", w.qkv_weight);
  b.insert("block0.qkv.bias", w.qkv_bias);
  b.insert("block0.proj.weight", w.proj_weight);
  b.insert("block0.proj.bias", w.proj_bias);
  b.insert("block0.ln2.gamma", w.ln2_gamma);
  b.insert("block0.ln2.beta", w.ln2_beta);
  b.insert("block0.fc1.weight", w.fc1_weight);
  b.insert("block0.fc1.bias", w.fc1_bias);
  b.insert("block0.fc2.weight", w.fc2_weight);
  b.insert("block0.fc2.bias", w.fc2_bias);
}

BlockWeights weights_from_bundle(const TensorBundle& b, const BlockSpec& spec) {
  spec.validate();
  const std::size_t d = spec.embed_dim, hid = spec.hidden_dim();
  std::string missing;
  auto get = [&](const std::string& name, const Shape& shape) -> Tensor {
    const Tensor* t = b.find(name);
    if (!t) {
      missing += (missing.empty() ? "" : ", ") + name;
      return Tensor(shape);
    }
    if (t->shape() != shape) {
      throw ShapeError(name + " has shape " + shape_to_string(t->shape()) + ", expected " + shape_to_string(shape));
    }
    return *t;
  };
  BlockWeights w;
  w.ln1_gamma = get("block0.ln1.gamma", {d});
  w.ln1_beta = get("block0.ln1.beta", {d});
  w.qkv_weight = get("block0.qkv.weight", {d, 3 * d});
  w.qkv_bias = get("block0.qkv.bias", {3 * d});
  w.proj_weight = get("block0.proj.weight", {d, d});
  w.proj_bias = get("block0.proj.bias", {d});
  w.ln2_gamma = get("block0.ln2.gamma", {d});
  w.ln2_beta = get("block0.ln2.beta", {d});
  w.fc1_weight = get("block0.fc1.weight", {d, hid});
  w.fc1_bias = get("block0.fc1.bias", {hid});
  w.fc2_weight = get("block0.fc2.weight", {hid, d});
  w.fc2_bias = get("block0.fc2.bias", {d});
  if (!missing.empty()) throw DataError("missing tensors: " + missing);
  return w;
}

Tensor synthetic_input(const BlockSpec& spec, std::uint64_t seed, std::size_t outlier_channels, float outlier_gain) {
  spec.validate();
  Rng rng(seed);
  const std::size_t n = spec.seq_len, d = spec.embed_dim;
  Tensor x({n, d});
  for (auto& v : x.mutable_data()) v = static_cast<float>(rng.normal());
  // Channel choice depends only on the block seed so every sample shares
  // the same outlier channels.
  Rng channel_rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  std::set<std::size_t> chosen;
  while (chosen.size() < std::min(outlier_channels, d)) chosen.insert(channel_rng.below(d));
  for (std::size_t r = 0; r < n; ++r) {
    for (auto c : chosen) x[r * d + c] *= outlier_gain;
  }
  return x;
}

std::vector<float> matmul(std::span<const float> a, std::span<const float> b, std::size_t rows, std::size_t inner,
                          std::size_t cols, std::span<const float> bias) {
  std::vector<float> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += static_cast<double>(a[r * inner + k]) * b[k * cols + c];
      if (!bias.empty()) acc += bias[c];
      out[r * cols + c] = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<float> layer_norm(std::span<const float> x, std::size_t rows, std::size_t dim,
                              std::span<const float> gamma, std::span<const float> beta, float eps) {
  std::vector<float> out(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = x.data() + r * dim;
    double mean = 0.0;
    for (std::size_t i = 0; i < dim; ++i) mean += row[i];
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(dim);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t i = 0; i < dim; ++i) {
      out[r * dim + i] = static_cast<float>((row[i] - mean) * inv * gamma[i] + beta[i]);
    }
  }
  return out;
}

void softmax_rows_inplace(std::span<float> x, std::size_t row_len) {
  for (std::size_t r = 0; r + row_len <= x.size(); r += row_len) {
    float m = x[r];
    for (std::size_t i = 1; i < row_len; ++i) m = std::max(m, x[r + i]);
    double sum = 0.0;
    std::vector<double> e(row_len);
    for (std::size_t i = 0; i < row_len; ++i) {
      e[i] = std::exp(static_cast<double>(x[r + i]) - m);
      sum += e[i];
    }
    for (std::size_t i = 0; i < row_len; ++i) x[r + i] = static_cast<float>(e[i] / sum);
  }
}

float gelu(float x) {
  const double v = x;
  return static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
}

std::vector<float> attention_logits(std::span<const float> q, std::span<const float> k, const BlockSpec& spec) {
  const std::size_t n = spec.seq_len, d = spec.embed_dim, h = spec.heads, dh = spec.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<float> out(h * n * n);
  for (std::size_t head = 0; head < h; ++head) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          acc += static_cast<double>(q[i * d + head * dh + c]) * k[j * d + head * dh + c];
        }
        out[(head * n + i) * n + j] = static_cast<float>(acc * inv_sqrt);
      }
    }
  }
  return out;
}

std::vector<float> attention_context(std::span<const float> probs, std::span<const float> v, const BlockSpec& spec) {
  const std::size_t n = spec.seq_len, d = spec.embed_dim, h = spec.heads, dh = spec.head_dim();
  std::vector<float> out(n * d);
  for (std::size_t head = 0; head < h; ++head) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          acc += static_cast<double>(probs[(head * n + i) * n + j]) * v[j * d + head * dh + c];
        }
        out[i * d + head * dh + c] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor fp_forward(const BlockSpec& spec, const BlockWeights& w, const Tensor& x, TensorBundle* capture) {
  spec.validate();
  const std::size_t n = spec.seq_len, d = spec.embed_dim, h = spec.heads, hid = spec.hidden_dim();
  if (x.shape() != Shape{n, d}) {
    throw ShapeError("block input must be " + shape_to_string({n, d}) + ", got " + shape_to_string(x.shape()));
  }
  auto keep = [&](const char* name, Shape shape, const std::vector<float>& v) {
    if (capture) capture->insert(bundle_name(name), Tensor(std::move(shape), v));
  };

  const std::vector<float> xin(x.data().begin(), x.data().end());
  keep(site::ln1_input, {n, d}, xin);
  const auto h1 = layer_norm(xin, n, d, w.ln1_gamma.data(), w.ln1_beta.data(), spec.ln_eps);
  keep(site::ln1_output, {n, d}, h1);
  const auto qkv = matmul(h1, w.qkv_weight.data(), n, d, 3 * d, w.qkv_bias.data());
  keep(site::qkv_output, {n, 3 * d}, qkv);

  std::vector<float> q(n * d), k(n * d), v(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      q[r * d + c] = qkv[r * 3 * d + c];
      k[r * d + c] = qkv[r * 3 * d + d + c];
      v[r * d + c] = qkv[r * 3 * d + 2 * d + c];
    }
  }
  keep(site::query, {n, d}, q);
  keep(site::key, {n, d}, k);
  keep(site::value, {n, d}, v);

  auto logits = attention_logits(q, k, spec);
  keep(site::attention_logits, {h, n, n}, logits);
  softmax_rows_inplace(logits, n);
  keep(site::post_softmax, {h, n, n}, logits);
  const auto ctx = attention_context(logits, v, spec);
  keep(site::attn_context, {n, d}, ctx);
  const auto proj = matmul(ctx, w.proj_weight.data(), n, d, d, w.proj_bias.data());
  keep(site::proj_output, {n, d}, proj);

  std::vector<float> x2(n * d);
  for (std::size_t i = 0; i < x2.size(); ++i) x2[i] = xin[i] + proj[i];
  keep(site::ln2_input, {n, d}, x2);
  const auto h2 = layer_norm(x2, n, d, w.ln2_gamma.data(), w.ln2_beta.data(), spec.ln_eps);
  keep(site::ln2_output, {n, d}, h2);
  auto f1 = matmul(h2, w.fc1_weight.data(), n, d, hid, w.fc1_bias.data());
  keep(site::fc1_output, {n, hid}, f1);
  for (auto& val : f1) val = gelu(val);
  keep(site::post_gelu, {n, hid}, f1);
  const auto f2 = matmul(f1, w.fc2_weight.data(), n, hid, d, w.fc2_bias.data());
  keep(site::fc2_output, {n, d}, f2);

  std::vector<float> y(n * d);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x2[i] + f2[i];
  keep(site::block_output, {n, d}, y);
  return Tensor({n, d}, std::move(y));
}

Tensor sample_slice(const Tensor& stacked, std::size_t i) {
  if (stacked.rank() == 0 || i >= stacked.shape()[0]) throw ShapeError("sample index out of range");
  Shape inner(stacked.shape().begin() + 1, stacked.shape().end());
  const std::size_t count = element_count(inner);
  auto begin = stacked.data().begin() + static_cast<std::ptrdiff_t>(i * count);
  return Tensor(std::move(inner), std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(count)));
}

Tensor stack_samples(const std::vector<Tensor>& samples) {
  if (samples.empty()) throw DataError("cannot stack zero samples");
  Shape shape = samples.front().shape();
  std::vector<float> data;
  data.reserve(samples.size() * samples.front().size());
  for (const auto& s : samples) {
    if (s.shape() != shape) throw ShapeError("stacked samples must share a shape");
    data.insert(data.end(), s.data().begin(), s.data().end());
  }
  shape.insert(shape.begin(), samples.size());
  return Tensor(std::move(shape), std::move(data));
}

Tensor synthetic_batch(const BlockSpec& spec, std::uint64_t seed, std::size_t samples) {
  std::vector<Tensor> xs;
  xs.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) xs.push_back(synthetic_input(spec, seed * 1000003ull + i));
  return stack_samples(xs);
}

Tensor fp_forward_batch(const BlockSpec& spec, const BlockWeights& w, const Tensor& batch, TensorBundle* capture) {
  if (batch.rank() != 3) throw ShapeError("batch must have shape (S, n, d)");
  const std::size_t s = batch.shape()[0];
  std::vector<Tensor> outs;
  std::map<std::string, std::vector<Tensor>> caps;
  for (std::size_t i = 0; i < s; ++i) {
    TensorBundle one;
    outs.push_back(fp_forward(spec, w, sample_slice(batch, i), capture ? &one : nullptr));
    for (const auto& [name, t] : one) caps[name].push_back(t);
  }
  if (capture) {
    for (auto& [name, ts] : caps) capture->insert(name, stack_samples(ts));
  }
  return stack_samples(outs);
}

std::uint64_t tensor_digest(const Tensor& t) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 0x100000001b3ull;
    }
  };
  for (auto d : t.shape()) {
    const std::uint64_t v = d;
    mix(&v, sizeof(v));
  }
  mix(t.data().data(), t.size() * sizeof(float));
  return hash;
}

}  // namespace tsq
