// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "semmix/error.hpp"

namespace semmix {

std::vector<int> StepPlan::with_terminal() const {
  auto out = indices;
  out.push_back(0);
  return out;
}

StepPlan make_step_plan(const NoiseSchedule& sched, int count, double eta) {
  const int T = sched.steps();
  if (count < 1 || count > T) {
    throw_invalid("step count " + std::to_string(count) + " outside [1, " + std::to_string(T) + "]");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw_invalid("eta must lie in [0, 1]");
  StepPlan plan;
  plan.count = count;
  plan.eta = eta;
  for (int i = count; i >= 1; --i) {
    plan.indices.push_back(static_cast<int>(static_cast<long long>(i) * T / count));
  }
  return plan;
}

std::string_view to_string(TrajectorySource source) {
  return source == TrajectorySource::kForwardFromImage ? "forward-from-image" : "reverse-conditional";
}

bool Trajectory::contains(int k) const {
  return std::find(indices.begin(), indices.end(), k) != indices.end();
}

const SampleBatch& Trajectory::at(int k) const {
  const auto it = std::find(indices.begin(), indices.end(), k);
  if (it == indices.end()) throw_invalid("trajectory has no state at index " + std::to_string(k));
  return states[static_cast<std::size_t>(it - indices.begin())];
}

void Trajectory::push(int k, SampleBatch state) {
  if (!indices.empty()) {
    if (k >= indices.back()) throw_invalid("trajectory indices must decrease");
    if (!state.same_layout(states.front())) throw_invalid("trajectory states must share a layout");
  }
  indices.push_back(k);
  states.push_back(std::move(state));
}

SampleBatch estimate_x0(const NoiseSchedule& sched, const SampleBatch& x_k, int k,
                        const SampleBatch& eps_hat) {
  if (k < 0 || k > sched.steps()) throw_invalid("estimate_x0: index out of range");
  if (!x_k.same_layout(eps_hat)) throw_invalid("estimate_x0: eps layout mismatch");
  const double a = sched.alpha(k);
  if (!(a > 0.0)) throw_numeric("estimate_x0: alpha is zero");
  const double s = sched.sigma(k);
  SampleBatch out = x_k;
  auto o = out.values();
  const auto e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (o[i] - s * e[i]) / a;
  return out;
}

SampleBatch reverse_step_with_eps(const NoiseSchedule& sched, const SampleBatch& x_k, int k,
                                  int k_prev, const SampleBatch& eps_hat, double eta,
                                  std::vector<Rng>& rngs) {
  if (!(k > k_prev && k_prev >= 0 && k <= sched.steps())) {
    throw_invalid("reverse_step: need T >= k > k_prev >= 0");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw_invalid("eta must lie in [0, 1]");
  SampleBatch out = estimate_x0(sched, x_k, k, eps_hat);
  const double a_prev = sched.alpha(k_prev);
  const double s2_prev = sched.sigma2(k_prev);
  const double s2_k = sched.sigma2(k);
  const auto tr = transition_params(sched, k, k_prev);
  const double tilde2 = s2_k > 0.0 ? s2_prev * tr.sigma2_ts / s2_k : 0.0;
  const double noise_sd = eta * std::sqrt(tilde2);
  const double dir = std::sqrt(std::max(0.0, s2_prev - eta * eta * tilde2));
  auto o = out.values();
  const auto e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a_prev * o[i] + dir * e[i];
  if (noise_sd > 0.0) {
    if (rngs.size() != out.count()) throw_invalid("reverse_step: need one generator per run");
    std::vector<double> z(out.sample_size());
    for (std::size_t b = 0; b < out.count(); ++b) {
      fill_normal(z, rngs[b]);
      auto xs = out.sample(b);
      for (std::size_t i = 0; i < z.size(); ++i) xs[i] += noise_sd * z[i];
    }
  }
  return out;
}

SampleBatch reverse_step(const Denoiser& model, const SampleBatch& x_k, int k, int k_prev,
                         const Prompt& prompt, double guidance_weight, double eta,
                         std::vector<Rng>& rngs) {
  const SampleBatch eps = guided_eps(model, x_k, k, prompt, guidance_weight);
  return reverse_step_with_eps(model.schedule(), x_k, k, k_prev, eps, eta, rngs);
}

SampleResult denoise(const Denoiser& model, const SampleBatch& x_start, int start_k,
                     const Prompt& prompt, const StepPlan& plan, double guidance_weight,
                     std::vector<Rng>& rngs, bool record, int stop_k) {
  const auto path = plan.with_terminal();
  const auto first = std::find(path.begin(), path.end(), start_k);
  if (first == path.end()) throw_invalid("denoise: start index " + std::to_string(start_k) + " is not in the plan");
  const auto last = std::find(path.begin(), path.end(), stop_k);
  if (last == path.end() || last < first) throw_invalid("denoise: stop index is not in the plan below the start");
  SampleResult result;
  if (record) {
    result.trajectory.emplace();
    result.trajectory->push(start_k, x_start);
  }
  SampleBatch x = x_start;
  for (auto it = first; it != last; ++it) {
    x = reverse_step(model, x, *it, *(it + 1), prompt, guidance_weight, plan.eta, rngs);
    if (!x.all_finite()) throw_numeric("denoise: non-finite state at index " + std::to_string(*(it + 1)));
    if (record) result.trajectory->push(*(it + 1), x);
  }
  result.x0 = std::move(x);
  return result;
}

SampleResult sample(const Denoiser& model, const Prompt& prompt, const StepPlan& plan,
                    double guidance_weight, std::vector<Rng>& rngs, bool record) {
  if (rngs.empty()) throw_invalid("sample: need at least one run");
  if (plan.indices.empty()) throw_invalid("sample: empty plan");
  const SampleBatch noise = normal_batch(model.sample_shape(), rngs);
  return denoise(model, noise, plan.indices.front(), prompt, plan, guidance_weight, rngs, record);
}

Trajectory ddim_invert(const Denoiser& model, const SampleBatch& x0, const Prompt& prompt,
                       const StepPlan& plan, double guidance_weight, int up_to_k) {
  const NoiseSchedule& sched = model.schedule();
  auto path = plan.with_terminal();
  std::reverse(path.begin(), path.end());  // 0, tau_1, ..., tau_N
  if (std::find(path.begin(), path.end(), up_to_k) == path.end()) {
    throw_invalid("ddim_invert: target index is not in the plan");
  }
  std::vector<SampleBatch> states{x0};
  SampleBatch x = x0;
  for (std::size_t i = 0; i + 1 < path.size() && path[i] < up_to_k; ++i) {
    const int k = path[i];
    const int k_next = path[i + 1];
    const int eval_k = k == 0 ? k_next : k;
    const SampleBatch eps = guided_eps(model, x, eval_k, prompt, guidance_weight);
    const SampleBatch x0_hat = k == 0 ? x : estimate_x0(sched, x, k, eps);
    const double a = sched.alpha(k_next);
    const double s = sched.sigma(k_next);
    auto xv = x.values();
    const auto h = x0_hat.values();
    const auto e = eps.values();
    for (std::size_t j = 0; j < xv.size(); ++j) xv[j] = a * h[j] + s * e[j];
    if (!x.all_finite()) throw_numeric("ddim_invert: non-finite state");
    states.push_back(x);
  }
  Trajectory traj;
  traj.source = TrajectorySource::kForwardFromImage;
  for (std::size_t i = states.size(); i-- > 0;) traj.push(path[i], std::move(states[i]));
  return traj;
}

}  // namespace semmix
