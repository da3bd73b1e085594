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

#include "tsq/calibrate.hpp"

#include <map>

#include "tsq/errors.hpp"
#include "tsq/rng.hpp"

namespace tsq {

const std::vector<LayerPlan>& calibration_layers() {
  static const std::vector<LayerPlan> layers = {
      {"ln1", site::ln1_input, "", site::ln1_output},
      {"qkv", site::ln1_output, site::qkv_weights, site::qkv_output},
      {"attention_scores", site::query, site::key, site::attention_logits},
      {"softmax", site::attention_logits, "", site::post_softmax},
      {"attention_context", site::post_softmax, site::value, site::attn_context},
      {"proj", site::attn_context, site::proj_weights, site::proj_output},
      {"ln2", site::ln2_input, "", site::ln2_output},
      {"fc1", site::ln2_output, site::fc1_weights, site::fc1_output},
      {"fc2", site::post_gelu, site::fc2_weights, site::fc2_output},
  };
  return layers;
}

std::string weight_tensor_name(const std::string& s) {
  if (s == site::qkv_weights) return "block0.qkv.weight";
  if (s == site::proj_weights) return "block0.proj.weight";
  if (s == site::fc1_weights) return "block0.fc1.weight";
  if (s == site::fc2_weights) return "block0.fc2.weight";
  return bundle_name(s);
}

namespace {

const std::vector<std::string>& parameter_names() {
  static const std::vector<std::string> names = {
      "block0.ln1.gamma", "block0.ln1.beta",   "block0.qkv.weight", "block0.qkv.bias",
      "block0.proj.weight", "block0.proj.bias", "block0.ln2.gamma",  "block0.ln2.beta",
      "block0.fc1.weight", "block0.fc1.bias",   "block0.fc2.weight", "block0.fc2.bias"};
  return names;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

// Row-wise helpers over a stacked (S, ...) tensor.
Tensor stacked_linear(const Tensor& a, const Tensor& w, const Tensor& bias) {
  const std::size_t inner = w.shape()[0], cols = w.shape()[1];
  const std::size_t rows = a.size() / inner;
  Shape shape = a.shape();
  shape.back() = cols;
  return Tensor(shape, matmul(a.data(), w.data(), rows, inner, cols, bias.data()));
}

Tensor stacked_layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, float eps) {
  const std::size_t dim = a.shape().back();
  return Tensor(a.shape(), layer_norm(a.data(), a.size() / dim, dim, gamma.data(), beta.data(), eps));
}

template <typename Fn>
Tensor per_sample(const Tensor& a, const Tensor& b, Shape out_inner, Fn&& fn) {
  const std::size_t s = a.shape()[0];
  const std::size_t a_step = a.size() / s, b_step = b.size() / s;
  const std::size_t o_step = element_count(out_inner);
  Shape shape = out_inner;
  shape.insert(shape.begin(), s);
  std::vector<float> out(s * o_step);
  for (std::size_t i = 0; i < s; ++i) {
    const auto r = fn(a.data().subspan(i * a_step, a_step), b.data().subspan(i * b_step, b_step));
    std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(i * o_step));
  }
  return Tensor(std::move(shape), std::move(out));
}

Shape expected_shape(const std::string& s, const BlockSpec& spec, std::size_t samples) {
  const std::size_t n = spec.seq_len, d = spec.embed_dim, h = spec.heads, hid = spec.hidden_dim();
  if (s == site::attention_logits || s == site::post_softmax) return {samples, h, n, n};
  if (s == site::post_gelu || s == site::fc1_output) return {samples, n, hid};
  if (s == site::qkv_output) return {samples, n, 3 * d};
  return {samples, n, d};
}

}  // namespace

std::vector<std::string> required_gradients() {
  std::vector<std::string> out;
  for (const auto& l : calibration_layers()) out.push_back(bundle_name(l.output_site) + TensorBundle::kGradSuffix);
  return out;
}

std::vector<std::string> required_tensors(MetricKind metric) {
  std::vector<std::string> out;
  for (const auto& l : calibration_layers()) {
    out.push_back(bundle_name(l.activation_site));
    if (l.weight_site == site::key || l.weight_site == site::value) out.push_back(bundle_name(l.weight_site));
  }
  for (const auto& p : parameter_names()) out.push_back(p);
  if (metric == MetricKind::grad_weighted) {
    for (auto& g : required_gradients()) out.push_back(std::move(g));
  }
  return out;
}

TensorBundle synthetic_calibration_bundle(const BlockSpec& spec, std::size_t samples, std::uint64_t seed,
                                          bool with_gradients) {
  if (samples == 0) throw ValidationError("sample count must be >= 1");
  const BlockWeights w = init_block_weights(spec);
  TensorBundle bundle;
  add_weights_to_bundle(w, bundle);
  fp_forward_batch(spec, w, synthetic_batch(spec, seed, samples), &bundle);
  if (with_gradients) {
    Rng rng(seed ^ 0x5bd1e9955bd1e995ull);
    for (const auto& l : calibration_layers()) {
      const Tensor& out = bundle.at(bundle_name(l.output_site));
      Tensor g(out.shape());
      for (auto& v : g.mutable_data()) v = static_cast<float>(rng.normal());
      bundle.insert(bundle_name(l.output_site) + TensorBundle::kGradSuffix, std::move(g));
    }
  }
  return bundle;
}

CalibrationResult calibrate_model(const TensorBundle& bundle, const BlockSpec& spec,
                                  const QuantPipelineSpec& pipeline, const SearchConfig& cfg) {
  spec.validate();
  pipeline.validate();
  cfg.validate();

  std::vector<std::string> missing;
  for (const auto& name : required_tensors(MetricKind::plain_mse)) {
    if (!bundle.contains(name)) missing.push_back(name);
  }
  if (!missing.empty()) throw DataError("bundle is missing tensors: " + join(missing));
  if (cfg.metric == MetricKind::grad_weighted) {
    for (const auto& name : required_gradients()) {
      if (!bundle.contains(name)) missing.push_back(name);
    }
    if (!missing.empty()) throw DataError("grad_weighted metric needs gradients; missing: " + join(missing));
  }
  bundle.validate();

  const BlockWeights w = weights_from_bundle(bundle, spec);
  const Tensor& first = bundle.at(bundle_name(site::ln1_input));
  if (first.rank() != 3) throw ShapeError("activations must be stacked as (S, n, d)");
  const std::size_t samples = first.shape()[0];
  for (const auto& name : required_tensors(cfg.metric)) {
    if (name.rfind(kBlockPrefix, 0) != 0) continue;
    std::string s = name.substr(std::string(kBlockPrefix).size());
    const bool grad = s.size() > 5 && s.ends_with(TensorBundle::kGradSuffix);
    if (grad) s.resize(s.size() - 5);
    if (s.find('.') != std::string::npos) continue;  // block parameters
    const Shape want = expected_shape(s, spec, samples);
    if (bundle.at(name).shape() != want) {
      throw ShapeError(name + " has shape " + shape_to_string(bundle.at(name).shape()) + ", expected " +
                       shape_to_string(want));
    }
  }

  const std::size_t n = spec.seq_len, d = spec.embed_dim, h = spec.heads;
  std::map<std::string, LayerEvaluator> evaluators;
  evaluators["ln1"] = [&](const Tensor*, const Tensor& a) {
    return stacked_layer_norm(a, w.ln1_gamma, w.ln1_beta, spec.ln_eps);
  };
  evaluators["ln2"] = [&](const Tensor*, const Tensor& a) {
    return stacked_layer_norm(a, w.ln2_gamma, w.ln2_beta, spec.ln_eps);
  };
  evaluators["qkv"] = [&](const Tensor* wt, const Tensor& a) { return stacked_linear(a, *wt, w.qkv_bias); };
  evaluators["proj"] = [&](const Tensor* wt, const Tensor& a) { return stacked_linear(a, *wt, w.proj_bias); };
  evaluators["fc1"] = [&](const Tensor* wt, const Tensor& a) { return stacked_linear(a, *wt, w.fc1_bias); };
  evaluators["fc2"] = [&](const Tensor* wt, const Tensor& a) { return stacked_linear(a, *wt, w.fc2_bias); };
  evaluators["attention_scores"] = [&](const Tensor* key, const Tensor& q) {
    return per_sample(q, *key, {h, n, n}, [&](auto qs, auto ks) { return attention_logits(qs, ks, spec); });
  };
  evaluators["softmax"] = [&](const Tensor*, const Tensor& a) {
    Tensor out = a;
    softmax_rows_inplace(out.mutable_data(), n);
    return out;
  };
  evaluators["attention_context"] = [&](const Tensor* v, const Tensor& p) {
    return per_sample(p, *v, {n, d}, [&](auto ps, auto vs) { return attention_context(ps, vs, spec); });
  };

  CalibrationResult result;
  result.block = spec;
  result.config = cfg;
  result.samples = samples;
  for (const auto& plan : calibration_layers()) {
    const SiteSpec& act = pipeline.at(plan.activation_site);
    SearchConfig layer_cfg = cfg;
    layer_cfg.activation_bits = act.bits;
    LayerSearchInput in;
    in.name = plan.name;
    in.evaluate = evaluators.at(plan.name);
    in.activations = &bundle.at(bundle_name(plan.activation_site));
    if (!plan.weight_site.empty()) {
      in.weights = &bundle.at(weight_tensor_name(plan.weight_site));
      layer_cfg.weight_bits = pipeline.at(plan.weight_site).bits;
    }
    if (cfg.metric == MetricKind::grad_weighted) {
      in.grad = &bundle.at(bundle_name(plan.output_site) + TensorBundle::kGradSuffix);
    }
    in.scheme.scheme = act.scheme;
    in.scheme.v2sf_kind = act.v2sf_kind;
    in.scheme.v2sf_shift = act.v2sf_shift;
    in.scheme.channel_axis = in.activations->rank() - 1;

    LayerCalibration lc = search_layer(in, layer_cfg);
    lc.activation_site = plan.activation_site;
    lc.weight_site = plan.weight_site;
    result.layers.push_back(std::move(lc));
  }
  return result;
}

}  // namespace tsq
