// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "semmix/error.hpp"
#include "semmix/manifest.hpp"

namespace semmix {

static_assert(std::endian::native == std::endian::little, "array files assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'M', 'X', 'A', 'R', 'R', '1', '\0'};
constexpr std::uint32_t kDtypeF32 = 1;
constexpr std::uint32_t kMaxDims = 8;

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw_io("array file is truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof v);
  pos += sizeof v;
  return v;
}

}  // namespace

std::uint64_t FloatArray::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_array(const std::filesystem::path& path, const FloatArray& array) {
  if (array.dims.empty() || array.dims.size() > kMaxDims) throw_invalid("array rank must be 1..8");
  if (array.element_count() != array.values.size()) throw_invalid("array dims do not match value count");
  std::string bytes(kMagic, sizeof kMagic);
  put(bytes, kDtypeF32);
  put(bytes, static_cast<std::uint32_t>(array.dims.size()));
  for (auto d : array.dims) put(bytes, d);
  bytes.append(reinterpret_cast<const char*>(array.values.data()), array.values.size() * sizeof(float));
  write_file_atomic(path, bytes);
}

FloatArray read_array(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw_io("'" + path.string() + "' is not an array file");
  }
  std::size_t pos = sizeof kMagic;
  if (take<std::uint32_t>(bytes, pos) != kDtypeF32) throw_io("unsupported array dtype");
  const auto ndim = take<std::uint32_t>(bytes, pos);
  if (ndim == 0 || ndim > kMaxDims) throw_io("bad array rank");
  FloatArray out;
  for (std::uint32_t i = 0; i < ndim; ++i) out.dims.push_back(take<std::uint64_t>(bytes, pos));
  const auto n = out.element_count();
  if (bytes.size() - pos != n * sizeof(float)) throw_io("array payload size does not match its dims");
  out.values.resize(n);
  std::memcpy(out.values.data(), bytes.data() + pos, n * sizeof(float));
  return out;
}

}  // namespace semmix
