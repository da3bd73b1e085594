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
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "support.hpp"
#include "tsq/bundle_io.hpp"
#include "tsq/calibrate.hpp"

using namespace tsq;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tsq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Small search so the CLI tests stay fast.
const std::vector<std::string> kQuick{"--candidates", "20", "--rounds", "2", "--samples", "6"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("calibrate twice gives identical files") {
  const auto d1 = testing::scratch_dir("cli_cal1");
  const auto d2 = testing::scratch_dir("cli_cal2");
  const auto a = run_cli(with({"calibrate", "--synthetic", "--seed", "7", "--out", d1.string()}, kQuick));
  const auto b = run_cli(with({"calibrate", "--synthetic", "--seed", "7", "--out", d2.string(), "--threads", "2"}, kQuick));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(d1 / "calibration.json") == slurp(d2 / "calibration.json"));
  CHECK(slurp(d1 / "config.json") == slurp(d2 / "config.json"));
  const auto cfg = nlohmann::json::parse(slurp(d1 / "config.json"));
  CHECK(cfg.at("seed") == 7);
}

TEST_CASE("defaults are echoed to config.json") {
  const auto dir = testing::scratch_dir("cli_defaults");
  // A config file shrinks the run while rounds and N' stay at their defaults.
  const auto cfg_path = dir / "in.json";
  std::ofstream(cfg_path) << R"({"search": {"candidates": 10}, "samples": 4})";
  const auto r = run_cli({"calibrate", "--synthetic", "--config", cfg_path.string(), "--out", (dir / "o").string()});
  REQUIRE(r.code == 0);
  const auto cfg = nlohmann::json::parse(slurp(dir / "o" / "config.json"));
  CHECK(cfg.at("search").at("rounds") == 3);
  CHECK(cfg.at("search").at("max_shift") == 6);
  CHECK(cfg.at("search").at("candidates") == 10);
  CHECK(cfg.at("samples") == 4);

  SearchConfig defaults;
  CHECK(defaults.candidates == 100);
}

TEST_CASE("grad_weighted without gradients is a data error naming the tensors") {
  const auto dir = testing::scratch_dir("cli_bundle");
  const BlockSpec spec;
  BundleManifest m;
  m.model = "toy";
  save_bundle(synthetic_calibration_bundle(spec, 4, 0, false), dir / "b", m);
  const auto r = run_cli({"calibrate", "--bundle", (dir / "b").string(), "--metric", "grad_weighted", "--out",
                          (dir / "o").string()});
  CHECK(r.code == cli::kData);
  CHECK(r.err.find(required_gradients().front()) != std::string::npos);

  const auto ok = run_cli(with({"calibrate", "--bundle", (dir / "b").string(), "--out", (dir / "o").string()}, kQuick));
  CHECK(ok.code == 0);
}

TEST_CASE("eval, quantize and version checks") {
  const auto dir = testing::scratch_dir("cli_eval");
  REQUIRE(run_cli(with({"calibrate", "--synthetic", "--out", dir.string()}, kQuick)).code == 0);
  const auto calib = (dir / "calibration.json").string();

  for (const char* mode : {"integer_path", "fake_quant"}) {
    const auto r = run_cli({"eval", "--calib", calib, "--mode", mode, "--samples", "2"});
    CHECK(r.code == 0);
    CHECK(r.out.find("post_softmax") != std::string::npos);
  }
  const auto bad_mode = run_cli({"eval", "--calib", calib, "--mode", "float"});
  CHECK(bad_mode.code == cli::kUsage);

  const auto q = run_cli({"quantize", "--calib", calib, "--synthetic", "--samples", "2", "--out", (dir / "q").string()});
  CHECK(q.code == 0);
  CHECK(std::filesystem::exists(dir / "q" / "packed" / "block0.post_softmax.v2sf"));
  CHECK(std::filesystem::exists(dir / "q" / "dequantized" / "manifest.json"));

  auto j = nlohmann::json::parse(slurp(dir / "calibration.json"));
  j["format_version"] = 99;
  std::ofstream(dir / "v99.json") << j.dump();
  const auto v = run_cli({"eval", "--calib", (dir / "v99.json").string()});
  CHECK(v.code == cli::kData);
  CHECK(v.err.find("version") != std::string::npos);
}

TEST_CASE("compare writes one histogram per site and scheme") {
  const auto dir = testing::scratch_dir("cli_compare");
  const auto r = run_cli({"compare", "--synthetic", "--samples", "4", "--out", dir.string()});
  REQUIRE(r.code == 0);
  for (const char* s : {"post_softmax", "post_gelu"}) {
    for (const char* scheme : {"uniform", "twin_region", "v2sf"}) {
      const auto p = dir / (std::string(s) + "_" + scheme + ".csv");
      CHECK(std::filesystem::exists(p));
      CHECK(slurp(p).rfind("bin_left,bin_right,count\n", 0) == 0);
    }
  }
  CHECK(slurp(dir / "summary.txt").find('*') != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(run_cli({}).code == cli::kUsage);
  CHECK(run_cli({"calibrate", "--synthetic"}).code == cli::kUsage);
  CHECK(run_cli({"frobnicate"}).code == cli::kUsage);
  CHECK(run_cli({"calibrate", "--synthetic", "--bits", "40", "--out", "/tmp/x"}).code == cli::kUsage);
  CHECK(run_cli({"--help"}).code == 0);
}
