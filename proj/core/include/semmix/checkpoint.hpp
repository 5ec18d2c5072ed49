// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semmix/attention.hpp"
#include "semmix/denoiser.hpp"
#include "semmix/unet.hpp"

namespace semmix {

/// Flat copy of every parameter blob, in registration order.
using WeightSet = std::vector<std::vector<float>>;

struct OptimizerState {
  std::int64_t step = 0;
  WeightSet first_moment;
  WeightSet second_moment;
};

/// On-disk layout: u64 little-endian header length, UTF-8 JSON header, then
/// raw little-endian f32 blobs in header order (weights, then optional EMA
/// weights, then optional optimizer moments).
struct ModelCheckpoint {
  UNetConfig architecture;
  nlohmann::json schedule;       // NoiseSchedule::describe()
  Vocabulary vocabulary;
  nlohmann::json training;       // step, loss, config echo
  WeightSet weights;
  std::optional<WeightSet> ema_weights;
  std::optional<OptimizerState> optimizer;
  std::string rng_state;         // training engine state, for exact resume

  /// Weights used for inference: EMA copy when present.
  const WeightSet& inference_weights() const { return ema_weights ? *ema_weights : weights; }
};

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Blob sizes must match the architecture exactly.
WeightSet export_weights(const UNet<float>& net);
void import_weights(UNet<float>& net, const WeightSet& weights);

/// Trained network behind the Denoiser interface. Weights are immutable
/// after construction, so predict_eps may run concurrently.
class UNetDenoiser final : public Denoiser {
 public:
  explicit UNetDenoiser(const ModelCheckpoint& ckpt);
  UNetDenoiser(const UNetConfig& config, const NoiseSchedule& sched, Vocabulary vocab,
               const WeightSet& weights);

  SampleBatch predict_eps(const SampleBatch& x_t, int t,
                          std::span<const Prompt> prompts) const override;
  using Denoiser::predict_eps;

  /// predict_eps that also records the cross-attention maps.
  SampleBatch predict_eps_with_attention(const SampleBatch& x_t, int t,
                                         std::span<const Prompt> prompts,
                                         AttentionCapture& capture) const;

  const NoiseSchedule& schedule() const override { return schedule_; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  SampleShape sample_shape() const override;
  const UNet<float>& network() const { return *net_; }

 private:
  SampleBatch run(const SampleBatch& x_t, int t, std::span<const Prompt> prompts,
                  AttentionCapture* capture) const;

  NoiseSchedule schedule_;
  Vocabulary vocab_;
  std::unique_ptr<UNet<float>> net_;
};

}  // namespace semmix
