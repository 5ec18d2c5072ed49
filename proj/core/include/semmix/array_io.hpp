// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace semmix {

/// Raw array file: 8-byte magic "SMXARR1\0", u32 dtype (1 = f32), u32 ndim,
/// u64 dims, then little-endian f32 payload in row-major order.
struct FloatArray {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  std::uint64_t element_count() const;
};

void write_array(const std::filesystem::path& path, const FloatArray& array);
FloatArray read_array(const std::filesystem::path& path);

}  // namespace semmix
