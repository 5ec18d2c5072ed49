// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "semmix/checkpoint.hpp"
#include "semmix/manifest.hpp"
#include "semmix/sweep.hpp"

namespace semmix::tools {

/// File written next to every command's outputs.
inline constexpr std::string_view kRunManifestName = "run_manifest.json";

/// Commands that produce files and a RunManifest.
const std::vector<std::string>& run_commands();

/// Fills defaults, resolves paths to absolute form, and validates. Unknown
/// keys are rejected. The result is the canonical config document.
nlohmann::json normalize_config(std::string_view command, const nlohmann::json& doc);

struct RunOutcome {
  RunManifest manifest;
  nlohmann::json summary;  // printed on stdout by the CLI
};

/// Runs `command` on a normalized (or normalizable) document, writing
/// outputs and the RunManifest into `out`.
RunOutcome execute(std::string_view command, const nlohmann::json& config,
                   const std::filesystem::path& out);

struct ReplayReport {
  std::string command;
  std::vector<std::string> matched;
  std::vector<std::string> mismatched;
  bool ok() const { return mismatched.empty(); }
  nlohmann::json to_json() const;
};

/// Re-executes a recorded run into `out` and compares output hashes.
ReplayReport replay(const std::filesystem::path& manifest_path, const std::filesystem::path& out);

/// A loaded checkpoint with the hash of its file.
struct LoadedModel {
  std::filesystem::path path;
  std::string sha256;
  std::shared_ptr<const UNetDenoiser> model;
};

LoadedModel load_model(const std::filesystem::path& path);

/// Mixing request as shared by the CLI and the service: MixConfig fields
/// plus content, layout source, mode, and optional sweep axes.
struct MixRequest {
  std::string content;
  nlohmann::json layout;        // {"image": path} | {"data": dir, "index": i} | {"prompt": text}
  std::string mode = "mix";     // mix | conditional | remove
  MixConfig config;
  std::vector<SweepAxis> axes;  // empty for single runs
  int workers = 1;
};

/// Keys of a mix document that are not MixConfig fields.
MixRequest parse_mix_request(const nlohmann::json& doc);
nlohmann::json mix_request_json(const MixRequest& request);

struct MixOutputs {
  std::vector<SampleBatch> cells;         // one sample per cell, row-major
  std::vector<nlohmann::json> cell_info;  // config echo per cell
  std::size_t rows = 1;
  std::size_t columns = 1;
  std::vector<std::vector<std::string>> labels;
  double wall_seconds = 0.0;
};

LayoutSource resolve_layout(const nlohmann::json& layout, const Denoiser& model);

/// Runs a single mix (or every sweep cell) for a request.
MixOutputs run_mix_request(const Denoiser& model, const MixRequest& request);

/// Sample -> PNG bytes for an image-shaped batch entry.
std::string sample_png(const SampleBatch& batch, std::size_t index);

}  // namespace semmix::tools
