// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "semmix/denoiser.hpp"
#include "semmix/oracle.hpp"

namespace semmix::testing {

/// Denoiser that predicts eps = `value` everywhere.
class ConstantDenoiser final : public Denoiser {
 public:
  ConstantDenoiser(NoiseSchedule sched, SampleShape shape, double value = 0.0)
      : schedule_(std::move(sched)), shape_(shape), vocab_({"a", "b"}), value_(value) {}

  SampleBatch predict_eps(const SampleBatch& x_t, int t, std::span<const Prompt> prompts) const override {
    check_predict_args(*this, x_t, t, prompts);
    SampleBatch out(x_t.shape(), x_t.count());
    for (auto& v : out.values()) v = value_;
    return out;
  }
  using Denoiser::predict_eps;
  const NoiseSchedule& schedule() const override { return schedule_; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  SampleShape sample_shape() const override { return shape_; }

 private:
  NoiseSchedule schedule_;
  SampleShape shape_;
  Vocabulary vocab_;
  double value_;
};

inline NoiseSchedule default_schedule() { return NoiseSchedule(1000, ScheduleFamily::kCosine); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace semmix::testing
