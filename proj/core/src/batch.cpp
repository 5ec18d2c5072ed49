// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/batch.hpp"

#include <algorithm>
#include <cmath>

#include "semmix/error.hpp"

namespace semmix {

SampleBatch::SampleBatch(SampleShape shape, std::size_t count, std::vector<double> values)
    : shape_(shape), count_(count), values_(std::move(values)) {
  if (values_.size() != shape_.size() * count_) {
    throw_invalid("sample batch value count does not match its shape");
  }
}

bool SampleBatch::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

SampleBatch SampleBatch::slice(std::size_t first, std::size_t n) const {
  if (first + n > count_) throw_invalid("sample batch slice out of range");
  const auto begin = values_.begin() + static_cast<std::ptrdiff_t>(first * sample_size());
  return SampleBatch(shape_, n,
                     std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n * sample_size())));
}

void SampleBatch::append(const SampleBatch& other) {
  if (count_ == 0 && values_.empty()) shape_ = other.shape_;
  if (!(other.shape_ == shape_)) throw_invalid("cannot append samples of a different shape");
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  count_ += other.count_;
}

Rng make_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

std::vector<Rng> make_rngs(std::uint64_t seed, std::size_t count) {
  std::vector<Rng> rngs;
  rngs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) rngs.push_back(make_rng(seed, i));
  return rngs;
}

void fill_normal(std::span<double> out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : out) v = normal(rng);
}

SampleBatch normal_batch(SampleShape shape, std::vector<Rng>& rngs) {
  SampleBatch batch(shape, rngs.size());
  for (std::size_t i = 0; i < rngs.size(); ++i) fill_normal(batch.sample(i), rngs[i]);
  return batch;
}

}  // namespace semmix
