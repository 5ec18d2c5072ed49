// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semmix/batch.hpp"
#include "semmix/prompt.hpp"

namespace semmix {

inline const std::vector<std::string> kAllShapes{"circle", "square", "triangle", "cross", "star"};
inline const std::vector<std::string> kAllTextures{"solid", "striped", "dotted"};

inline constexpr double kBackgroundLevel = -1.0;
inline constexpr double kSolidLevel = 0.5;

struct ShapesSpec {
  std::vector<std::string> shapes = kAllShapes;
  std::vector<std::string> textures = kAllTextures;
  int count_per_class = 500;
  std::uint64_t seed = 0;
  int image_size = 32;

  void validate() const;
  /// Concepts: shapes then textures.
  Vocabulary vocabulary() const;
  nlohmann::json to_json() const;
  static ShapesSpec from_json(const nlohmann::json& doc);
};

/// Per-image generator draw, in pixel units (pixel centers at i + 0.5).
struct ShapeParams {
  int shape = 0;    // index into spec.shapes
  int texture = 0;  // index into spec.textures
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double angle = 0.0;
  int phase_x = 0;
  int phase_y = 0;
};

struct ShapesDataset {
  ShapesSpec spec;
  Vocabulary vocabulary;
  SampleBatch images;           // values are exactly representable as f32
  std::vector<Prompt> prompts;
  std::vector<ShapeParams> params;

  std::size_t size() const { return prompts.size(); }
  nlohmann::json manifest() const;
};

/// Images are grouped by (shape, texture) pair in spec order; image i draws
/// its parameters from make_rng(seed, i).
ShapesDataset generate_shapes(const ShapesSpec& spec);

/// Rasterizes one image with 8x8 supersampling.
std::vector<double> render_shape(const ShapeParams& p, const ShapesSpec& spec);

/// True when the point lies inside the (untextured) shape.
bool shape_contains(const std::string& shape, const ShapeParams& p, double x, double y);

/// Files: images.smxarr, manifest.json, prompts.tsv.
void save_dataset(const ShapesDataset& data, const std::filesystem::path& dir);
ShapesDataset load_dataset(const std::filesystem::path& dir);

}  // namespace semmix
