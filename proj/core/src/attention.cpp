// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/attention.hpp"

#include "semmix/error.hpp"

namespace semmix {

template <typename Matrix>
void scale_attention_columns(Matrix& maps, std::span<const double> scales) {
  if (static_cast<std::size_t>(maps.cols()) != scales.size()) {
    throw_invalid("attention scale count does not match the text token count");
  }
  using Scalar = typename Matrix::Scalar;
  for (Eigen::Index j = 0; j < maps.cols(); ++j) {
    const double s = scales[static_cast<std::size_t>(j)];
    if (s != 1.0) maps.col(j) *= static_cast<Scalar>(s);
  }
}

template void scale_attention_columns(Eigen::MatrixXd&, std::span<const double>);
template void scale_attention_columns(Eigen::MatrixXf&, std::span<const double>);

CrossAttentionState reweight_attention(const CrossAttentionState& state,
                                       std::span<const double> scales) {
  CrossAttentionState out = state;
  scale_attention_columns(out.maps, scales);
  return out;
}

}  // namespace semmix
