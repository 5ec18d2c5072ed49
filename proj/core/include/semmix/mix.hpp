// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "semmix/sampler.hpp"

namespace semmix {

enum class LayoutNoiseMode { kSharedEps, kDdimInversion };
std::string_view to_string(LayoutNoiseMode mode);
LayoutNoiseMode layout_noise_mode_from_string(std::string_view name);

inline constexpr double kDefaultKMax = 0.6;
inline constexpr double kDefaultKMin = 0.3;

struct MixConfig {
  double kmax = kDefaultKMax;  // fraction of T
  double kmin = kDefaultKMin;
  double nu = 0.5;
  double guidance = 1.0;
  int steps = kDefaultInferenceSteps;
  double eta = 0.0;
  std::uint64_t seed = 0;
  LayoutNoiseMode layout_noise_mode = LayoutNoiseMode::kSharedEps;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing fields keep their defaults; unknown fields are rejected.
  static MixConfig from_json(const nlohmann::json& doc, const MixConfig& base);
  static MixConfig from_json(const nlohmann::json& doc);
  friend bool operator==(const MixConfig&, const MixConfig&) = default;
};

/// Schedule indices bounding the interpolation window. K_max is the smallest
/// plan index at or above kmax*T (tau_N if none); K_min is the largest plan
/// index at or below kmin*T, or 0.
struct MixWindow {
  int k_max = 0;
  int k_min = 0;
};
MixWindow mix_window(const StepPlan& plan, int total_steps, double kmax, double kmin);

/// Plan indices (with terminal 0) inside [k_min, k_max], decreasing.
std::vector<int> window_indices(const StepPlan& plan, const MixWindow& window);

struct MixResult {
  SampleBatch output;
  std::optional<Trajectory> trajectory;  // mixed states from K_max down to 0
  Trajectory layout;
  MixConfig config;
  double wall_seconds = 0.0;
};

/// Noisy versions of clean layout samples at every window index. Shared-eps
/// draws one eps per run from its generator; inversion runs DDIM inversion
/// under `layout_prompt` and needs `model`.
Trajectory layout_noises_from_image(const Denoiser* model, const NoiseSchedule& sched,
                                    const SampleBatch& x0, const MixConfig& cfg,
                                    std::vector<Rng>& rngs,
                                    const Prompt& layout_prompt = Prompt::null_prompt());

/// Shared-eps layout trajectory for a given noise draw:
/// x_k = alpha_k x0 + sigma_k eps at every window index.
Trajectory noised_layout(const NoiseSchedule& sched, const SampleBatch& x0, const SampleBatch& eps,
                         const MixConfig& cfg);

/// Conditional generation under `layout_prompt` from pure noise to K_min,
/// keeping the window slice. One run per generator.
Trajectory layout_noises_from_prompt(const Denoiser& model, const Prompt& layout_prompt,
                                     const MixConfig& cfg, std::vector<Rng>& rngs);

/// Content generation over a prepared layout trajectory. The layout is read,
/// never modified.
MixResult mix(const Denoiser& model, const Trajectory& layout, const Prompt& content,
              const MixConfig& cfg, std::vector<Rng>& rngs, bool record = false);

MixResult mix_image_text(const Denoiser& model, const SampleBatch& x0, const Prompt& content,
                         const MixConfig& cfg, std::vector<Rng>& rngs, bool record = false);

MixResult mix_text_text(const Denoiser& model, const Prompt& layout_prompt, const Prompt& content,
                        const MixConfig& cfg, std::vector<Rng>& rngs, bool record = false);

/// Image-text mixing with a prompt carrying at least one negative token scale.
MixResult remove_concept(const Denoiser& model, const SampleBatch& x0, const Prompt& prompt,
                         const MixConfig& cfg, std::vector<Rng>& rngs, bool record = false);

}  // namespace semmix
