// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/denoiser.hpp"

#include <string>

#include "semmix/error.hpp"

namespace semmix {

void check_predict_args(const Denoiser& model, const SampleBatch& x_t, int t,
                        std::span<const Prompt> prompts) {
  if (t < 1 || t > model.schedule().steps()) {
    throw_invalid("predict_eps: step " + std::to_string(t) + " outside [1, T]");
  }
  if (!(x_t.shape() == model.sample_shape())) throw_invalid("predict_eps: sample shape mismatch");
  if (prompts.size() != 1 && prompts.size() != x_t.count()) {
    throw_invalid("predict_eps: need one prompt or one prompt per sample");
  }
  for (const auto& p : prompts) validate_prompt(p, model.vocabulary());
  if (!x_t.all_finite()) throw_numeric("predict_eps: non-finite input");
}

SampleBatch guided_eps(const Denoiser& model, const SampleBatch& x_t, int t,
                       const Prompt& prompt, double guidance_weight) {
  if (!(guidance_weight >= 0.0)) throw_invalid("guidance weight must be >= 0");
  if (guidance_weight == 1.0 || prompt.is_null()) return model.predict_eps(x_t, t, prompt);
  const Prompt null_prompt = Prompt::null_prompt();
  SampleBatch uncond = model.predict_eps(x_t, t, null_prompt);
  if (guidance_weight == 0.0) return uncond;
  const SampleBatch cond = model.predict_eps(x_t, t, prompt);
  auto u = uncond.values();
  const auto c = cond.values();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = u[i] + guidance_weight * (c[i] - u[i]);
  return uncond;
}

}  // namespace semmix
