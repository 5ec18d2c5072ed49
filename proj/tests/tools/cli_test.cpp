// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fixture.hpp"
#include "semmix/array_io.hpp"
#include "semmix/manifest.hpp"

namespace semmix {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::run;
using testing::ToyWorld;

fs::path scratch(const std::string& name) {
  const fs::path p = ToyWorld::get().root / "cli" / name;
  fs::remove_all(p);
  return p;
}

std::string error_category(const testing::CliResult& r) {
  const json j = json::parse(r.err, nullptr, false);
  if (!j.is_object() || !j.contains("error")) return "";
  return j["error"].value("category", "");
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, tools::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, tools::kExitUsage);
  EXPECT_EQ(run({"mix", "--content", "striped"}).code, tools::kExitUsage);
  const auto r = run({"gen-data", "--out", scratch("u").string(), "--bogus"});
  EXPECT_EQ(r.code, tools::kExitUsage);
  EXPECT_EQ(error_category(r), "usage");
  EXPECT_EQ(run({"--version"}).code, tools::kExitOk);
}

TEST(Cli, ConfigAndLookupErrors) {
  const auto& w = ToyWorld::get();
  const std::string model = w.model().string();
  auto r = run({"mix", "--out", scratch("a").string(), "--model", model, "--content", "striped",
                "--data", w.data_dir.string(), "--index", "0", "--nu", "3"});
  EXPECT_EQ(r.code, tools::kExitInvalidConfig) << r.err;
  EXPECT_EQ(error_category(r), "invalid_config");
  r = run({"mix", "--out", scratch("b").string(), "--model", model, "--content", "hexagon",
           "--data", w.data_dir.string(), "--index", "0"});
  EXPECT_EQ(r.code, tools::kExitInvalidConfig) << r.err;
  r = run({"mix", "--out", scratch("c").string(), "--model", (w.root / "missing.ckpt").string(),
           "--content", "striped", "--layout-prompt", "circle"});
  EXPECT_EQ(r.code, tools::kExitNotFound) << r.err;
  r = run({"mix", "--out", scratch("d").string(), "--model", model, "--content", "striped",
           "--data", w.data_dir.string(), "--index", "999"});
  EXPECT_EQ(r.code, tools::kExitNotFound) << r.err;

  const fs::path cfg = w.root / "cli" / "bad.json";
  fs::create_directories(cfg.parent_path());
  std::ofstream(cfg) << R"({"count_per_class": 2, "colour": "red"})";
  r = run({"gen-data", "--config", cfg.string(), "--out", scratch("e").string()});
  EXPECT_EQ(r.code, tools::kExitInvalidConfig) << r.err;
  EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST(Cli, FlagsOverrideConfigFile) {
  const fs::path cfg = ToyWorld::get().root / "cli" / "gen.json";
  fs::create_directories(cfg.parent_path());
  std::ofstream(cfg) << R"({"shapes": ["circle"], "textures": ["solid"], "count_per_class": 2, "image_size": 16})";
  const fs::path out = scratch("flags");
  const auto r = run({"gen-data", "--config", cfg.string(), "--out", out.string(), "--count-per-class", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_array(out / "images.smxarr").dims.front(), 3u);
  const RunManifest m = RunManifest::from_json(json::parse(read_file(out / "run_manifest.json")));
  EXPECT_EQ(m.command, "gen-data");
  EXPECT_EQ(m.config.at("count_per_class"), 3);
}

TEST(Cli, ReplayDetectsOutputMismatch) {
  const auto& w = ToyWorld::get();
  const fs::path out = scratch("mix");
  auto r = run({"mix", "--out", out.string(), "--model", w.model().string(), "--content", "striped",
                "--data", w.data_dir.string(), "--index", "1", "--steps", "10", "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "output.png"));
  r = run({"replay", "--manifest", (out / "run_manifest.json").string(), "--out", scratch("mix2").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(json::parse(r.out).at("ok").get<bool>());

  RunManifest m = RunManifest::load(out / "run_manifest.json");
  for (auto& o : m.outputs) {
    if (o.path == "output.png") o.sha256 = sha256_hex("something else");
  }
  m.save(out / "run_manifest.json");
  r = run({"replay", "--manifest", (out / "run_manifest.json").string(), "--out", scratch("mix3").string()});
  EXPECT_EQ(r.code, tools::kExitCheckFailed);
  const json report = json::parse(r.out);
  EXPECT_FALSE(report.at("ok").get<bool>());
  EXPECT_EQ(report.at("mismatched"), json::array({"output.png"}));
}

TEST(Cli, OracleCheckReportsWorstError) {
  const fs::path out = scratch("oracle");
  const auto r = run({"oracle-check", "--out", out.string(), "--probes", "40", "--dimensions", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = json::parse(read_file(out / "report.json"));
  EXPECT_TRUE(report.at("pass").get<bool>());
  EXPECT_LT(report.at("max_error").get<double>(), 1e-4);
}

TEST(Cli, SweepWritesOneCellPerGridPoint) {
  const auto& w = ToyWorld::get();
  const fs::path out = scratch("sweep");
  const auto r = run({"sweep", "--out", out.string(), "--model", w.model().string(), "--content", "striped",
                      "--layout-prompt", "circle", "--nu", "0:1:0.5", "--s", "1,-1", "--steps", "8",
                      "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json cells = json::parse(read_file(out / "cells.json"));
  ASSERT_EQ(cells.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "cell_%03zu.png", i);
    EXPECT_TRUE(fs::exists(out / name)) << name;
    EXPECT_EQ(cells[i].at("index"), i);
  }
  EXPECT_TRUE(fs::exists(out / "montage.png"));
}

}  // namespace
}  // namespace semmix
