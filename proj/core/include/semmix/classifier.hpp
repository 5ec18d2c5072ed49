// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "semmix/shapes.hpp"

namespace semmix {

inline constexpr double kSilhouetteThreshold = -0.5;

/// Binary mask, row-major, side x side.
using Mask = std::vector<std::uint8_t>;

/// Pixels above `threshold`, reduced to the largest 4-connected component.
Mask silhouette(std::span<const double> image, int side, double threshold = kSilhouetteThreshold);

/// Intersection over union; two empty masks give 1.
double mask_iou(const Mask& a, const Mask& b);
double silhouette_iou(std::span<const double> a, std::span<const double> b, int side);

/// Mean squared 5-point Laplacian over interior pixels.
double high_frequency_energy(std::span<const double> image, int side);

inline constexpr int kFeatureCount = 16;

/// Rotation-invariant outline descriptors followed by interior texture
/// statistics. Empty silhouettes give all-zero features.
std::vector<double> attribute_features(std::span<const double> image, int side);

struct AttributePrediction {
  int shape = -1;  // -1 when no object is found
  int texture = -1;
  double shape_confidence = 0.0;
  double texture_confidence = 0.0;
};

/// Two softmax-regression heads (shape, texture) over standardized features.
class AttributeClassifier {
 public:
  struct Options {
    int iterations = 3000;
    double learning_rate = 0.05;
    double l2 = 1e-4;
    double noise_sd = 0.05;   // augmentation copy with added Gaussian noise
    std::uint64_t seed = 0;
  };

  static AttributeClassifier train(const ShapesDataset& data, const Options& options);
  static AttributeClassifier train(const ShapesDataset& data) { return train(data, Options{}); }

  AttributePrediction predict(std::span<const double> image) const;
  const std::vector<std::string>& shapes() const { return shapes_; }
  const std::vector<std::string>& textures() const { return textures_; }
  int image_size() const { return image_size_; }
  int shape_index(const std::string& name) const;
  int texture_index(const std::string& name) const;

  nlohmann::json to_json() const;
  static AttributeClassifier from_json(const nlohmann::json& doc);

 private:
  std::vector<std::string> shapes_;
  std::vector<std::string> textures_;
  int image_size_ = 32;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
  Eigen::MatrixXd shape_w_;  // features x classes
  Eigen::VectorXd shape_b_;
  Eigen::MatrixXd texture_w_;
  Eigen::VectorXd texture_b_;
};

/// Fraction of samples whose predicted shape / texture equals `target`.
double shape_rate(const AttributeClassifier& clf, const SampleBatch& images, int target);
double texture_rate(const AttributeClassifier& clf, const SampleBatch& images, int target);

}  // namespace semmix
