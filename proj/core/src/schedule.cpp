// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "semmix/error.hpp"

namespace semmix {

std::string_view to_string(ScheduleFamily family) {
  return family == ScheduleFamily::kCosine ? "cosine" : "linear";
}

ScheduleFamily schedule_family_from_string(std::string_view name) {
  if (name == "cosine") return ScheduleFamily::kCosine;
  if (name == "linear") return ScheduleFamily::kLinear;
  throw_invalid("unknown schedule family '" + std::string(name) + "'");
}

namespace {

// alpha_bar(t) = floor + (1 - floor) * cos^2 profile, normalized so
// alpha_bar(0) = 1. The floor keeps alpha_T strictly positive.
std::vector<double> cosine_alpha_bar(int steps) {
  constexpr double offset = 0.008;
  auto profile = [&](int t) {
    const double u = (static_cast<double>(t) / steps + offset) / (1.0 + offset);
    const double c = std::cos(u * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = profile(0);
  std::vector<double> bar(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) {
    bar[t] = kCosineAlphaBarFloor + (1.0 - kCosineAlphaBarFloor) * (profile(t) / f0);
  }
  bar[0] = 1.0;
  return bar;
}

// DDPM linear betas rescaled to the step count, capped below 1.
std::vector<double> linear_alpha_bar(int steps) {
  const double scale = 1000.0 / steps;
  const double beta_start = std::min(1e-4 * scale, 0.999);
  const double beta_end = std::min(0.02 * scale, 0.999);
  std::vector<double> bar(static_cast<std::size_t>(steps) + 1);
  bar[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    bar[t] = bar[t - 1] * (1.0 - beta);
  }
  return bar;
}

}  // namespace

NoiseSchedule::NoiseSchedule(int steps, ScheduleFamily family) : steps_(steps), family_(family) {
  if (steps < 1) throw_invalid("schedule step count must be >= 1");
  const auto bar = family == ScheduleFamily::kCosine ? cosine_alpha_bar(steps)
                                                     : linear_alpha_bar(steps);
  alpha_.resize(bar.size());
  sigma2_.resize(bar.size());
  for (std::size_t t = 0; t < bar.size(); ++t) {
    alpha_[t] = std::sqrt(bar[t]);
    sigma2_[t] = 1.0 - bar[t];
  }
  alpha_[0] = 1.0;
  sigma2_[0] = 0.0;
}

double NoiseSchedule::sigma(int t) const { return std::sqrt(sigma2(t)); }

nlohmann::json NoiseSchedule::describe() const {
  return {{"family", std::string(to_string(family_))}, {"steps", steps_}};
}

NoiseSchedule NoiseSchedule::from_description(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("family") || !doc.contains("steps")) {
    throw_invalid("schedule description needs 'family' and 'steps'");
  }
  return NoiseSchedule(doc.at("steps").get<int>(),
                       schedule_family_from_string(doc.at("family").get<std::string>()));
}

NoiseSchedule build_schedule(int steps, ScheduleFamily family) {
  return NoiseSchedule(steps, family);
}

TransitionParams transition_params(const NoiseSchedule& sched, int t, int s) {
  if (s < 0 || t > sched.steps() || s >= t) {
    throw_invalid("transition_params needs 0 <= s < t <= T");
  }
  const double alpha_ts = sched.alpha(t) / sched.alpha(s);
  const double sigma2_ts = sched.sigma2(t) - alpha_ts * alpha_ts * sched.sigma2(s);
  return {alpha_ts, sigma2_ts};
}

std::vector<double> forward_diffuse(const NoiseSchedule& sched, std::span<const double> x0,
                                    int t, std::span<const double> eps) {
  if (x0.size() != eps.size()) throw_invalid("forward_diffuse: x0 and eps shapes differ");
  if (t < 0 || t > sched.steps()) throw_invalid("forward_diffuse: step out of range");
  const double a = sched.alpha(t);
  const double s = sched.sigma(t);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

}  // namespace semmix
