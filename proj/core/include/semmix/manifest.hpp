// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace semmix {

std::string_view code_version();

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

struct ManifestOutput {
  std::string path;    // relative to the manifest's directory
  std::string sha256;
};

/// Everything needed to re-execute a CLI run: the command, its full
/// normalized configuration, input hashes, and the hashes of what it wrote.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::string version{code_version()};
  std::string checkpoint_sha256;     // empty when no checkpoint was read
  std::vector<std::uint64_t> seeds;
  std::vector<ManifestOutput> outputs;
  std::vector<std::string> auxiliary;  // written but not reproducible (timings, logs)

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);

  /// Hashes `relative` under `dir` and records it as an output.
  void add_output(const std::filesystem::path& dir, const std::string& relative);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

}  // namespace semmix
