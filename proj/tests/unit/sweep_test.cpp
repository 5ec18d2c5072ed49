// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "semmix/error.hpp"
#include "semmix/sweep.hpp"
#include "test_util.hpp"

namespace semmix {
namespace {

TEST(SweepValues, RangeAndList) {
  EXPECT_EQ(parse_sweep_values("0.1:0.9:0.1"),
            (std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}));
  EXPECT_EQ(parse_sweep_values("0:1:0.25"), (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
  EXPECT_EQ(parse_sweep_values("0.5, -1,2"), (std::vector<double>{0.5, -1, 2}));
  EXPECT_EQ(parse_sweep_values("0.3"), (std::vector<double>{0.3}));
  EXPECT_THROW(parse_sweep_values("1:0:0.1"), Error);
  EXPECT_THROW(parse_sweep_values("0:1"), Error);
  EXPECT_THROW(parse_sweep_values("0:1:0"), Error);
  EXPECT_THROW(parse_sweep_values("a,b"), Error);
  EXPECT_THROW(sweep_param_from_string("gamma"), Error);
}

class SweepOracle : public ::testing::Test {
 protected:
  OracleDenoiser model{two_class_world(2), testing::default_schedule()};
  LayoutSource layout{SampleBatch(SampleShape::flat(2), 1, {-2.0, 0.1}), std::nullopt};
  Prompt content = parse_prompt("b", model.vocabulary());
};

TEST_F(SweepOracle, SingleCellEqualsSingleMix) {
  MixConfig cfg;
  cfg.seed = 40;
  const auto grid = sweep(model, layout, content, cfg, {{SweepParam::kNu, {0.3}}});
  cfg.nu = 0.3;
  const auto single = run_single_mix(model, layout, content, cfg);
  ASSERT_EQ(grid.cells.size(), 1u);
  EXPECT_EQ(grid.cells[0].result.output, single.output);
  EXPECT_EQ(grid.cells[0].config, cfg);
}

TEST_F(SweepOracle, OrderingIndependentOfWorkers) {
  const MixConfig cfg;
  const std::vector<SweepAxis> axes{{SweepParam::kKMax, {0.6, 0.8}}, {SweepParam::kNu, parse_sweep_values("0.1:0.9:0.1")}};
  const auto one = sweep(model, layout, content, cfg, axes, 1);
  const auto three = sweep(model, layout, content, cfg, axes, 3);
  ASSERT_EQ(one.cells.size(), 18u);
  EXPECT_EQ(one.rows(), 2u);
  EXPECT_EQ(one.columns(), 9u);
  for (std::size_t i = 0; i < one.cells.size(); ++i) {
    EXPECT_EQ(one.cells[i].result.output, three.cells[i].result.output);
    EXPECT_EQ(one.cells[i].config.seed, cfg.seed + i);
  }
  EXPECT_EQ(one.cells[10].coords, (std::vector<std::size_t>{1, 1}));
  EXPECT_DOUBLE_EQ(one.cells[10].config.nu, 0.2);
  EXPECT_DOUBLE_EQ(one.cells[10].config.kmax, 0.8);
}

TEST_F(SweepOracle, ScaleAxisRewritesPrompt) {
  const auto grid = sweep(model, layout, content, MixConfig{}, {{SweepParam::kScale, {-1.0, 0.5}}});
  EXPECT_EQ(grid.cells[0].content.scales[1], -1.0);
  EXPECT_EQ(grid.cells[1].content.scales[1], 0.5);
}

TEST_F(SweepOracle, RejectsEmptyOrInvalidGrids) {
  EXPECT_THROW(sweep(model, layout, content, MixConfig{}, {}), Error);
  EXPECT_THROW(sweep(model, layout, content, MixConfig{}, {{SweepParam::kNu, {}}}), Error);
  EXPECT_THROW(sweep(model, layout, content, MixConfig{}, {{SweepParam::kKMin, {0.7}}}), Error);
  EXPECT_THROW(sweep(model, LayoutSource{}, content, MixConfig{}, {{SweepParam::kNu, {0.5}}}), Error);
}

}  // namespace
}  // namespace semmix
