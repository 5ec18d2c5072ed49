// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace semmix {

enum class ScheduleFamily { kCosine, kLinear };

std::string_view to_string(ScheduleFamily family);
ScheduleFamily schedule_family_from_string(std::string_view name);

/// Variance-preserving forward process over integer steps 0..T.
///
/// alpha(0) == 1, sigma2(0) == 0, alpha strictly decreasing to a strictly
/// positive alpha(T), and alpha(t)^2 + sigma2(t) == 1 for every t.
/// Immutable after construction.
class NoiseSchedule {
 public:
  NoiseSchedule(int steps, ScheduleFamily family);

  int steps() const { return steps_; }
  ScheduleFamily family() const { return family_; }

  double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t)); }
  double sigma2(int t) const { return sigma2_.at(static_cast<std::size_t>(t)); }
  double sigma(int t) const;

  std::span<const double> alphas() const { return alpha_; }
  std::span<const double> sigma2s() const { return sigma2_; }

  nlohmann::json describe() const;
  static NoiseSchedule from_description(const nlohmann::json& doc);

  friend bool operator==(const NoiseSchedule& a, const NoiseSchedule& b) {
    return a.steps_ == b.steps_ && a.family_ == b.family_;
  }

 private:
  int steps_;
  ScheduleFamily family_;
  std::vector<double> alpha_;
  std::vector<double> sigma2_;
};

/// Smallest alpha_T^2 the cosine family is allowed to reach.
inline constexpr double kCosineAlphaBarFloor = 1e-4;

NoiseSchedule build_schedule(int steps, ScheduleFamily family);

struct TransitionParams {
  double alpha_ts;
  double sigma2_ts;
};

/// Parameters of q(x_t | x_s) for 0 <= s < t <= T.
TransitionParams transition_params(const NoiseSchedule& sched, int t, int s);

/// x_t = alpha_t * x0 + sigma_t * eps, elementwise.
std::vector<double> forward_diffuse(const NoiseSchedule& sched, std::span<const double> x0,
                                    int t, std::span<const double> eps);

}  // namespace semmix
