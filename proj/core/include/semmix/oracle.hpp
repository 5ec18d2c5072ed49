// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semmix/denoiser.hpp"

namespace semmix {

struct MixtureComponent {
  std::vector<double> mean;
  double variance = 1.0;   // isotropic
  int class_index = 0;
  double weight = 1.0;     // within its class
};

/// Class-conditional isotropic Gaussian mixture. Class i is addressed by the
/// prompt token for classes()[i]; NULL addresses the equal-prior mixture of
/// all classes.
class MixtureWorld {
 public:
  MixtureWorld(int dimension, std::vector<std::string> classes, std::vector<MixtureComponent> components);

  int dimension() const { return dimension_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const std::vector<MixtureComponent>& components() const { return components_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  /// Mean of class `class_index` (weighted over its components).
  std::vector<double> class_mean(int class_index) const;
  /// Class selected by the prompt, or -1 for NULL.
  int class_of(const Prompt& prompt) const;

  nlohmann::json to_json() const;
  static MixtureWorld from_json(const nlohmann::json& doc);

  /// Draws `count` clean samples of `class_index` (-1 for all classes).
  std::vector<std::vector<double>> sample(int class_index, std::size_t count, Rng& rng) const;

 private:
  int dimension_;
  std::vector<std::string> classes_;
  std::vector<MixtureComponent> components_;
  Vocabulary vocab_;
};

/// Two well-separated single-component classes "a" (at -offset on axis 0) and
/// "b" (at +offset).
MixtureWorld two_class_world(int dimension, double offset = 2.0, double variance = 0.25);

/// Two classes "a" and "b" with three components each: means N(0, 1.5^2),
/// variances U(0.1, 1), weights 0.5/0.25/0.25.
MixtureWorld random_world(int dimension, Rng& rng);

struct ScoreCheckReport {
  std::size_t probes = 0;
  std::size_t coordinates = 0;
  double max_error = 0.0;  // |fd - eps| / max(1, |eps|)
  double step = 0.0;
  nlohmann::json to_json() const;
};

/// Compares oracle_eps with central differences of log_marginal_density at
/// `probes` random (x, t, prompt) points; x ~ N(0, 2^2), t ~ U{1..T}, the
/// prompt cycles NULL / each class.
ScoreCheckReport score_fd_check(const MixtureWorld& world, const NoiseSchedule& sched,
                                std::size_t probes, std::uint64_t seed, double step = 1e-5);

/// eps = -sigma_t * grad log q_t(x_t | class), closed form with log-sum-exp.
std::vector<double> oracle_eps(const MixtureWorld& world, const NoiseSchedule& sched,
                               std::span<const double> x_t, int t, const Prompt& prompt);

/// E[x0 | x_t, class] from component-wise Gaussian conditioning.
std::vector<double> posterior_mean_x0(const MixtureWorld& world, const NoiseSchedule& sched,
                                      std::span<const double> x_t, int t, const Prompt& prompt);

/// log q_t(x | class), normalized.
double log_marginal_density(const MixtureWorld& world, const NoiseSchedule& sched,
                            std::span<const double> x, int t, const Prompt& prompt);

/// The oracle world behind the Denoiser interface. Token scales in prompts
/// are ignored (the oracle has no attention).
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(MixtureWorld world, NoiseSchedule sched);

  SampleBatch predict_eps(const SampleBatch& x_t, int t,
                          std::span<const Prompt> prompts) const override;
  using Denoiser::predict_eps;

  const NoiseSchedule& schedule() const override { return schedule_; }
  const Vocabulary& vocabulary() const override { return world_.vocabulary(); }
  SampleShape sample_shape() const override { return SampleShape::flat(world_.dimension()); }
  const MixtureWorld& world() const { return world_; }

 private:
  MixtureWorld world_;
  NoiseSchedule schedule_;
};

}  // namespace semmix
