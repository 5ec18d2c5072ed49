// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unistd.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "semmix/checkpoint.hpp"
#include "semmix/shapes.hpp"
#include "semmix/tools/cli.hpp"
#include "semmix/trainer.hpp"

namespace semmix::testing {

/// A 16x16 toy dataset and a briefly trained tiny model, built once per
/// process under a fresh temporary directory.
struct ToyWorld {
  std::filesystem::path root;
  std::filesystem::path data_dir;    // root/datasets/toy
  std::filesystem::path models_dir;  // root/models, holding tiny.ckpt
  std::filesystem::path model() const { return models_dir / "tiny.ckpt"; }

  static const ToyWorld& get() {
    static const ToyWorld world = build();
    return world;
  }

 private:
  static ToyWorld build() {
    ToyWorld w;
    w.root = std::filesystem::temp_directory_path() /
             ("semmix_tools_test_" + std::to_string(::getpid()));
    std::filesystem::remove_all(w.root);
    w.data_dir = w.root / "datasets" / "toy";
    w.models_dir = w.root / "models";
    std::filesystem::create_directories(w.models_dir);
    ShapesSpec spec;
    spec.shapes = {"circle", "square"};
    spec.textures = {"solid", "striped"};
    spec.count_per_class = 4;
    spec.image_size = 16;
    const ShapesDataset data = generate_shapes(spec);
    save_dataset(data, w.data_dir);
    TrainConfig cfg;
    cfg.steps = 4;
    cfg.batch_size = 4;
    cfg.architecture.image_size = 16;
    cfg.architecture.widths = {8, 16, 16};
    cfg.architecture.groups = 4;
    cfg.architecture.time_dim = 16;
    cfg.architecture.token_dim = 8;
    cfg.architecture.attention_dim = 8;
    const TrainingData td{&data.images, &data.prompts, &data.vocabulary,
                          data_fingerprint(data.images, data.prompts)};
    save_checkpoint(train(td, cfg), w.model());
    return w;
  }
};

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = tools::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace semmix::testing
