// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semmix/mix.hpp"

namespace semmix {

enum class SweepParam { kNu, kKMin, kKMax, kScale };
std::string_view to_string(SweepParam param);
SweepParam sweep_param_from_string(std::string_view name);

struct SweepAxis {
  SweepParam param = SweepParam::kNu;
  std::vector<double> values;
};

/// "lo:hi:step" (inclusive) or a comma list.
std::vector<double> parse_sweep_values(std::string_view text);

/// Exactly one of `image` (a single clean sample) or `prompt`.
struct LayoutSource {
  std::optional<SampleBatch> image;
  std::optional<Prompt> prompt;
};

struct SweepCell {
  std::size_t index = 0;
  std::vector<std::size_t> coords;  // one per axis
  MixConfig config;
  Prompt content;
  MixResult result;
};

struct SweepResult {
  std::vector<SweepAxis> axes;
  std::vector<SweepCell> cells;  // row-major over axes, last axis fastest

  std::size_t rows() const;
  std::size_t columns() const;
};

/// Evaluates the Cartesian grid, one run per cell seeded with base.seed + cell
/// index, over `workers` threads. Ordering is independent of the worker count.
SweepResult sweep(const Denoiser& model, const LayoutSource& layout, const Prompt& content,
                  const MixConfig& base, const std::vector<SweepAxis>& axes, int workers = 1);

/// Config and prompt for one cell, without running it.
std::pair<MixConfig, Prompt> sweep_cell_config(const MixConfig& base, const Prompt& content,
                                               const std::vector<SweepAxis>& axes,
                                               const std::vector<std::size_t>& coords,
                                               std::size_t index);

/// Runs a single mix with one generator seeded from cfg.seed.
MixResult run_single_mix(const Denoiser& model, const LayoutSource& layout, const Prompt& content,
                         const MixConfig& cfg, bool record = false);

}  // namespace semmix
