// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace semmix {

/// Per-sample geometry. Flat worlds use {1, 1, d}.
struct SampleShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  static SampleShape flat(int dim) { return {1, 1, dim}; }
  static SampleShape image(int side) { return {1, side, side}; }
  friend bool operator==(const SampleShape&, const SampleShape&) = default;
};

/// A batch of equally shaped samples stored contiguously, sample-major.
class SampleBatch {
 public:
  SampleBatch() = default;
  SampleBatch(SampleShape shape, std::size_t count)
      : shape_(shape), count_(count), values_(shape.size() * count, 0.0) {}
  SampleBatch(SampleShape shape, std::size_t count, std::vector<double> values);

  static SampleBatch single(SampleShape shape, std::vector<double> values) {
    return SampleBatch(shape, 1, std::move(values));
  }

  const SampleShape& shape() const { return shape_; }
  std::size_t count() const { return count_; }
  std::size_t sample_size() const { return shape_.size(); }

  std::span<double> sample(std::size_t i) {
    return {values_.data() + i * sample_size(), sample_size()};
  }
  std::span<const double> sample(std::size_t i) const {
    return {values_.data() + i * sample_size(), sample_size()};
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const;
  bool same_layout(const SampleBatch& other) const {
    return shape_ == other.shape_ && count_ == other.count_;
  }

  /// Samples [first, first + n) as a new batch.
  SampleBatch slice(std::size_t first, std::size_t n) const;
  /// Appends all samples of `other` (shapes must match).
  void append(const SampleBatch& other);

  friend bool operator==(const SampleBatch&, const SampleBatch&) = default;

 private:
  SampleShape shape_{};
  std::size_t count_ = 0;
  std::vector<double> values_;
};

/// The random engine a single run owns.
using Rng = std::mt19937_64;

/// Engine for run `index` under `seed`; independent of batch composition.
Rng make_rng(std::uint64_t seed, std::uint64_t index = 0);

/// One engine per batch element: make_rng(seed, i) for i in [0, count).
std::vector<Rng> make_rngs(std::uint64_t seed, std::size_t count);

void fill_normal(std::span<double> out, Rng& rng);

/// Standard-normal batch; sample i drawn from rngs[i].
SampleBatch normal_batch(SampleShape shape, std::vector<Rng>& rngs);

}  // namespace semmix
