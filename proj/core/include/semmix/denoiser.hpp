// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "semmix/batch.hpp"
#include "semmix/prompt.hpp"
#include "semmix/schedule.hpp"

namespace semmix {

/// Noise-prediction function eps(x_t, t, prompt).
///
/// Implementations are deterministic and safe to call concurrently.
/// `prompts` holds either one prompt (shared by the whole batch) or exactly
/// one prompt per sample.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual SampleBatch predict_eps(const SampleBatch& x_t, int t,
                                  std::span<const Prompt> prompts) const = 0;

  virtual const NoiseSchedule& schedule() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
  virtual SampleShape sample_shape() const = 0;

  SampleBatch predict_eps(const SampleBatch& x_t, int t, const Prompt& prompt) const {
    return predict_eps(x_t, t, std::span<const Prompt>(&prompt, 1));
  }
};

/// Shared argument checks for predict_eps implementations.
void check_predict_args(const Denoiser& model, const SampleBatch& x_t, int t,
                        std::span<const Prompt> prompts);

/// Classifier-free guidance:
/// eps(NULL) + w * (eps(prompt) - eps(NULL)). w == 1 returns the conditional
/// prediction and w == 0 the unconditional one, without arithmetic.
SampleBatch guided_eps(const Denoiser& model, const SampleBatch& x_t, int t,
                       const Prompt& prompt, double guidance_weight);

}  // namespace semmix
