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

#include "tsq/calib_result.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tsq/errors.hpp"

namespace tsq {

using nlohmann::json;

std::string hex_float(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%a", v);
  return buf.data();
}

double parse_hex_float(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("bad float literal '" + s + "'");
  return v;
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t b0 = bytes[i];
    const std::uint32_t b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
    const std::uint32_t w = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kAlphabet[(w >> 18) & 63]);
    out.push_back(kAlphabet[(w >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kAlphabet[(w >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kAlphabet[w & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw FormatError("base64 length must be a multiple of 4");
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t w = 0;
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      int v = 0;
      if (c == '=') {
        ++pad;
      } else {
        v = value(c);
        if (v < 0 || pad) throw FormatError("invalid base64 character");
      }
      w = (w << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((w >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w & 0xff));
  }
  return out;
}

json search_config_to_json(const SearchConfig& cfg) {
  return json{{"rounds", cfg.rounds},
              {"candidates", cfg.candidates},
              {"max_shift", cfg.max_shift},
              {"space_factor", cfg.space_factor},
              {"weight_bits", cfg.weight_bits},
              {"activation_bits", cfg.activation_bits},
              {"metric", to_string(cfg.metric)},
              {"seed", cfg.seed}};
}

SearchConfig search_config_from_json(const json& j, SearchConfig c) {
  try {
    c.rounds = j.value("rounds", c.rounds);
    c.candidates = j.value("candidates", c.candidates);
    c.max_shift = j.value("max_shift", c.max_shift);
    c.space_factor = j.value("space_factor", c.space_factor);
    c.weight_bits = j.value("weight_bits", c.weight_bits);
    c.activation_bits = j.value("activation_bits", c.activation_bits);
    if (j.contains("metric")) c.metric = metric_from_string(j.at("metric").get<std::string>());
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw FormatError(std::string("search config: ") + e.what());
  }
  return c;
}

json block_spec_to_json(const BlockSpec& s) {
  return json{{"embed_dim", s.embed_dim}, {"heads", s.heads},         {"seq_len", s.seq_len},
              {"mlp_ratio", s.mlp_ratio}, {"seed", s.seed},           {"ln_eps", hex_float(s.ln_eps)}};
}

BlockSpec block_spec_from_json(const json& j, BlockSpec s) {
  try {
    s.embed_dim = j.value("embed_dim", s.embed_dim);
    s.heads = j.value("heads", s.heads);
    s.seq_len = j.value("seq_len", s.seq_len);
    s.mlp_ratio = j.value("mlp_ratio", s.mlp_ratio);
    s.seed = j.value("seed", s.seed);
    if (j.contains("ln_eps")) {
      const auto& e = j.at("ln_eps");
      s.ln_eps = static_cast<float>(e.is_string() ? parse_hex_float(e.get<std::string>()) : e.get<double>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("block spec: ") + e.what());
  }
  return s;
}

namespace {

json params_to_json(const ActivationParams& p, std::size_t channel_axis) {
  return std::visit(
      [&](const auto& v) -> json {
        using P = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<P, QuantParams>) {
          return json{{"type", "uniform"}, {"scale", hex_float(v.scale)}, {"bits", v.bits}, {"zero_point", 0}};
        } else if constexpr (std::is_same_v<P, V2sfParams>) {
          return json{{"type", "v2sf"},
                      {"kind", to_string(v.kind)},
                      {"bits", v.bits},
                      {"shift", v.shift},
                      {"small_scale", hex_float(v.small_scale)},
                      {"large_scale", hex_float(v.large_scale())}};
        } else {
          return json{{"type", "o2sf"},
                      {"bits", v.bits},
                      {"shift", v.shift},
                      {"outlier_scale", hex_float(v.outlier_scale)},
                      {"normal_scale", hex_float(v.normal_scale)},
                      {"channels", v.outlier_mask.size()},
                      {"channel_axis", channel_axis},
                      {"outlier_mask", base64_encode(pack_mask(v.outlier_mask))}};
        }
      },
      p);
}

float scale_field(const json& j, const char* key) {
  return static_cast<float>(parse_hex_float(j.at(key).get<std::string>()));
}

ActivationParams params_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "uniform") {
    QuantParams p{scale_field(j, "scale"), 0, j.at("bits").get<int>()};
    p.validate();
    return p;
  }
  if (type == "v2sf") {
    V2sfParams p{v2sf_kind_from_string(j.at("kind").get<std::string>()), j.at("bits").get<int>(),
                 j.at("shift").get<int>(), scale_field(j, "small_scale")};
    p.validate();
    if (p.large_scale() != scale_field(j, "large_scale")) throw FormatError("v2sf large_scale != 2^m * small_scale");
    return p;
  }
  if (type == "o2sf") {
    const auto channels = j.at("channels").get<std::size_t>();
    O2sfParams p;
    p.outlier_mask = unpack_mask(base64_decode(j.at("outlier_mask").get<std::string>()), channels);
    p.outlier_scale = scale_field(j, "outlier_scale");
    p.normal_scale = scale_field(j, "normal_scale");
    p.shift = j.at("shift").get<int>();
    p.bits = j.at("bits").get<int>();
    p.validate();
    return p;
  }
  throw FormatError("unknown parameter type '" + type + "'");
}

}  // namespace

std::string serialize_calibration(const CalibrationResult& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    json jl{{"layer", l.layer},
            {"scheme", to_string(l.scheme)},
            {"activation_site", l.activation_site},
            {"activation", params_to_json(l.activation, l.channel_axis)},
            {"metric", hex_float(l.metric)},
            {"warnings", l.warnings}};
    json rounds = json::array();
    for (double m : l.round_metrics) rounds.push_back(hex_float(m));
    jl["round_metrics"] = rounds;
    if (l.weight) {
      jl["weight_site"] = l.weight_site;
      jl["weight"] = params_to_json(*l.weight, 0);
    }
    layers.push_back(jl);
  }
  const json doc{{"format_version", r.format_version}, {"block", block_spec_to_json(r.block)},
                 {"config", search_config_to_json(r.config)}, {"samples", r.samples},
                 {"layers", layers}};
  return doc.dump(2) + "\n";
}

CalibrationResult parse_calibration(const std::string& text) {
  CalibrationResult r;
  try {
    const json doc = json::parse(text);
    r.format_version = doc.at("format_version").get<int>();
    if (r.format_version != CalibrationResult::kFormatVersion) {
      throw FormatError("calibration format version " + std::to_string(r.format_version) + " is not supported (expected " +
                        std::to_string(CalibrationResult::kFormatVersion) + ")");
    }
    r.block = block_spec_from_json(doc.at("block"));
    r.config = search_config_from_json(doc.at("config"));
    r.samples = doc.at("samples").get<std::size_t>();
    for (const auto& jl : doc.at("layers")) {
      LayerCalibration l;
      l.layer = jl.at("layer").get<std::string>();
      l.scheme = scheme_from_string(jl.at("scheme").get<std::string>());
      l.activation_site = jl.at("activation_site").get<std::string>();
      l.activation = params_from_json(jl.at("activation"));
      l.channel_axis = jl.at("activation").value("channel_axis", std::size_t{0});
      l.metric = parse_hex_float(jl.at("metric").get<std::string>());
      for (const auto& m : jl.at("round_metrics")) l.round_metrics.push_back(parse_hex_float(m.get<std::string>()));
      l.warnings = jl.at("warnings").get<std::vector<std::string>>();
      if (jl.contains("weight")) {
        l.weight_site = jl.at("weight_site").get<std::string>();
        l.weight = std::get<QuantParams>(params_from_json(jl.at("weight")));
      }
      r.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("calibration result: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("calibration result: ") + e.what());
  }
  return r;
}

void save_calibration(const CalibrationResult& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_calibration(r);
}

CalibrationResult load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_calibration(ss.str());
}

bool CalibrationResult::has_site(const std::string& s) const {
  for (const auto& l : layers) {
    if (l.activation_site == s || (l.weight && l.weight_site == s)) return true;
  }
  return false;
}

const ActivationParams& CalibrationResult::activation(const std::string& s) const {
  for (const auto& l : layers) {
    if (l.activation_site == s) return l.activation;
  }
  throw DataError("calibration has no activation site '" + s + "'");
}

const QuantParams& CalibrationResult::uniform(const std::string& s) const {
  for (const auto& l : layers) {
    if (l.weight && l.weight_site == s) return *l.weight;
  }
  const auto* p = std::get_if<QuantParams>(&activation(s));
  if (!p) throw DataError("site '" + s + "' is not uniformly quantized");
  return *p;
}

const V2sfParams& CalibrationResult::v2sf(const std::string& s) const {
  const auto* p = std::get_if<V2sfParams>(&activation(s));
  if (!p) throw DataError("site '" + s + "' is not V-2SF quantized");
  return *p;
}

const O2sfParams& CalibrationResult::o2sf(const std::string& s) const {
  const auto* p = std::get_if<O2sfParams>(&activation(s));
  if (!p) throw DataError("site '" + s + "' is not O-2SF quantized");
  return *p;
}

std::size_t CalibrationResult::channel_axis(const std::string& s) const {
  for (const auto& l : layers) {
    if (l.activation_site == s) return l.channel_axis;
  }
  throw DataError("calibration has no activation site '" + s + "'");
}

}  // namespace tsq
