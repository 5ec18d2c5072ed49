// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semmix/checkpoint.hpp"
#include "semmix/schedule.hpp"

namespace semmix {

struct TrainConfig {
  int steps = 3000;
  int batch_size = 32;
  double learning_rate = 2e-4;
  int schedule_steps = 1000;
  ScheduleFamily schedule_family = ScheduleFamily::kCosine;
  double prompt_dropout = 0.1;   // whole prompt replaced by NULL
  double token_dropout = 0.2;    // one concept token removed from multi-concept prompts
  double ema_decay = 0.999;      // 0 disables the EMA copy
  std::uint64_t seed = 0;
  int checkpoint_every = 250;
  int log_every = 10;
  UNetConfig architecture;       // vocab_size is taken from the data

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing fields, architecture fields included, keep their defaults.
  static TrainConfig from_json(const nlohmann::json& doc);
};

/// Images with one prompt each. `fingerprint` identifies the data for resume
/// checks (see data_fingerprint).
struct TrainingData {
  const SampleBatch* images = nullptr;
  const std::vector<Prompt>* prompts = nullptr;
  const Vocabulary* vocabulary = nullptr;
  std::string fingerprint;
};

std::string data_fingerprint(const SampleBatch& images, const std::vector<Prompt>& prompts);

struct TrainRecord {
  int step = 0;
  double loss = 0.0;  // per-sample summed squared error, batch mean
  double learning_rate = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHooks {
  /// Checkpoint written every checkpoint_every steps and at the end.
  std::optional<std::filesystem::path> checkpoint_path;
  /// Tab-separated "step loss lr wall_seconds" records, appended.
  std::optional<std::filesystem::path> log_path;
  std::function<void(const TrainRecord&)> on_record;
};

/// Minimizes E ||eps - eps_theta(alpha_t x0 + sigma_t eps, t, y)||^2 with t
/// uniform in [1, T]. With `resume`, continues from that checkpoint; the
/// result is bitwise equal to an uninterrupted run.
ModelCheckpoint train(const TrainingData& data, const TrainConfig& cfg, const TrainHooks& hooks = {},
                      const std::optional<ModelCheckpoint>& resume = std::nullopt);

/// Mean per-sample loss over `count` fixed draws (seeded, independent of
/// training randomness).
double evaluate_loss(const UNetDenoiser& model, const TrainingData& data, int count, std::uint64_t seed);

TrainConfig train_config_of(const ModelCheckpoint& ckpt);

struct GradcheckReport {
  std::size_t coordinates = 0;
  std::size_t within_tolerance = 0;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool all_finite = true;

  double pass_fraction() const {
    return coordinates == 0 ? 0.0 : static_cast<double>(within_tolerance) / static_cast<double>(coordinates);
  }
};

/// Relative error |a - f| / max(|a|, |f|, floor). The floor keeps
/// coordinates whose true gradient is zero from dominating.
inline constexpr double kGradcheckFloor = 1e-6;

struct GradcheckOptions {
  int batch = 2;
  int coordinates_per_parameter = 8;
  double step = 1e-5;
  double tolerance = 1e-3;
  std::uint64_t seed = 0;
  bool zero_input = false;
};

/// Central finite differences of the training loss against backprop on a
/// double-precision network built from `config` (at most 10k parameters).
GradcheckReport finite_diff_gradcheck(const UNetConfig& config, const GradcheckOptions& options);

/// Same comparison on a linear head y = W x + b under squared loss.
GradcheckReport linear_head_gradcheck(std::uint64_t seed, double tolerance = 1e-6);

}  // namespace semmix
