// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "semmix/denoiser.hpp"

namespace semmix {

/// Inference subsequence of schedule steps, stored in sampling order
/// (strictly decreasing, all >= 1).
struct StepPlan {
  int count = 0;
  std::vector<int> indices;
  double eta = 0.0;

  /// Plan indices followed by the terminal index 0.
  std::vector<int> with_terminal() const;
  friend bool operator==(const StepPlan&, const StepPlan&) = default;
};

inline constexpr int kDefaultInferenceSteps = 50;

/// Uniform stride: tau_i = floor(i * T / N) for i = 1..N, so tau_N = T.
StepPlan make_step_plan(const NoiseSchedule& sched, int count, double eta = 0.0);

enum class TrajectorySource { kForwardFromImage, kReverseConditional };
std::string_view to_string(TrajectorySource source);

/// States of a batch of runs at a strictly decreasing list of indices.
struct Trajectory {
  TrajectorySource source = TrajectorySource::kReverseConditional;
  std::vector<int> indices;
  std::vector<SampleBatch> states;

  bool contains(int k) const;
  /// Throws kInvalidConfig when `k` is missing.
  const SampleBatch& at(int k) const;
  void push(int k, SampleBatch state);
  std::size_t size() const { return indices.size(); }
};

/// (x_k - sigma_k * eps) / alpha_k.
SampleBatch estimate_x0(const NoiseSchedule& sched, const SampleBatch& x_k, int k,
                        const SampleBatch& eps_hat);

/// One generalized DDIM step given the predicted noise. `rngs` holds one
/// generator per run and is only consumed when eta > 0.
SampleBatch reverse_step_with_eps(const NoiseSchedule& sched, const SampleBatch& x_k, int k,
                                  int k_prev, const SampleBatch& eps_hat, double eta,
                                  std::vector<Rng>& rngs);

SampleBatch reverse_step(const Denoiser& model, const SampleBatch& x_k, int k, int k_prev,
                         const Prompt& prompt, double guidance_weight, double eta,
                         std::vector<Rng>& rngs);

struct SampleResult {
  SampleBatch x0;
  std::optional<Trajectory> trajectory;  // includes the starting state
};

/// Runs the plan from `x_start` at plan index `start_k` down to `stop_k`
/// (0 for a full sample).
SampleResult denoise(const Denoiser& model, const SampleBatch& x_start, int start_k,
                     const Prompt& prompt, const StepPlan& plan, double guidance_weight,
                     std::vector<Rng>& rngs, bool record, int stop_k = 0);

/// Draws x_{tau_N} ~ N(0, I) from each run's generator, then denoises.
SampleResult sample(const Denoiser& model, const Prompt& prompt, const StepPlan& plan,
                    double guidance_weight, std::vector<Rng>& rngs, bool record);

/// Deterministic DDIM inversion of clean samples along the plan, returning
/// states at every plan index <= `up_to_k` (and 0). The noise prediction for
/// the first step is taken at tau_1 since the model is undefined at t = 0.
Trajectory ddim_invert(const Denoiser& model, const SampleBatch& x0, const Prompt& prompt,
                       const StepPlan& plan, double guidance_weight, int up_to_k);

}  // namespace semmix
