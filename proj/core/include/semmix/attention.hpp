// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace semmix {

/// Post-softmax image-to-text attention of one cross-attention layer for one
/// sample: `maps` is N_image x N_text (row = spatial position).
struct CrossAttentionState {
  int layer = 0;
  Eigen::MatrixXd maps;

  int n_image() const { return static_cast<int>(maps.rows()); }
  int n_text() const { return static_cast<int>(maps.cols()); }
};

/// Multiplies column j by scales[j]. No renormalization; negative scales
/// are allowed and leave rows summing to less than one.
CrossAttentionState reweight_attention(const CrossAttentionState& state,
                                       std::span<const double> scales);

/// In-place form used inside the network forward pass.
template <typename Matrix>
void scale_attention_columns(Matrix& maps, std::span<const double> scales);

/// Attention maps captured during one forward call. Filled per invocation;
/// never shared between calls.
struct AttentionCapture {
  /// Prompt positions whose value vectors are zeroed in every layer before
  /// attending (probe for comparing against a zero scale).
  std::vector<int> masked_values;
  /// [sample][layer] -> maps before re-weighting.
  std::vector<std::vector<CrossAttentionState>> raw;
  /// [sample][layer] -> maps after re-weighting (what the network used).
  std::vector<std::vector<CrossAttentionState>> weighted;
};

}  // namespace semmix
