// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "semmix/error.hpp"
#include "semmix/shapes.hpp"
#include "semmix/trainer.hpp"

namespace semmix {
namespace {

struct TinyData {
  ShapesDataset shapes;
  TrainingData data;
};

TinyData tiny_data() {
  ShapesSpec spec;
  spec.shapes = {"circle", "square"};
  spec.textures = {"solid", "striped"};
  spec.count_per_class = 2;
  spec.image_size = 8;
  TinyData t{generate_shapes(spec), {}};
  t.data = {&t.shapes.images, &t.shapes.prompts, &t.shapes.vocabulary,
            data_fingerprint(t.shapes.images, t.shapes.prompts)};
  return t;
}

TrainConfig tiny_train_config(int steps) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  c.checkpoint_every = 2;
  c.log_every = 1;
  c.architecture.image_size = 8;
  c.architecture.widths = {8, 16, 16};
  c.architecture.groups = 4;
  c.architecture.time_dim = 16;
  c.architecture.token_dim = 8;
  c.architecture.attention_dim = 8;
  return c;
}

TEST(Gradcheck, LinearHeadMatchesAnalyticGradient) {
  const auto r = linear_head_gradcheck(3);
  EXPECT_GT(r.coordinates, 0u);
  EXPECT_EQ(r.within_tolerance, r.coordinates);
  EXPECT_TRUE(r.all_finite);
}

TEST(Gradcheck, TinyUNetBackpropMatchesFiniteDifferences) {
  GradcheckOptions opt;
  opt.seed = 11;
  const auto r = finite_diff_gradcheck(tiny_unet_config(5), opt);
  EXPECT_TRUE(r.all_finite);
  EXPECT_GE(r.pass_fraction(), 0.99) << "max rel err " << r.max_relative_error;
}

TEST(Gradcheck, ZeroInputStaysFinite) {
  GradcheckOptions opt;
  opt.zero_input = true;
  opt.coordinates_per_parameter = 2;
  const auto r = finite_diff_gradcheck(tiny_unet_config(5), opt);
  EXPECT_TRUE(r.all_finite);
  EXPECT_GE(r.pass_fraction(), 0.99);
}

TEST(Gradcheck, RejectsLargeModels) {
  UNetConfig big;
  big.vocab_size = 5;
  EXPECT_THROW(finite_diff_gradcheck(big, {}), Error);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  const TrainConfig c = tiny_train_config(7);
  EXPECT_EQ(TrainConfig::from_json(c.to_json()).to_json(), c.to_json());
  TrainConfig bad = c;
  bad.prompt_dropout = 1.5;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Train, InitialLossIsNearDimension) {
  const auto t = tiny_data();
  std::vector<TrainRecord> records;
  TrainHooks hooks;
  hooks.on_record = [&](const TrainRecord& r) { records.push_back(r); };
  TrainConfig cfg = tiny_train_config(1);
  train(t.data, cfg, hooks);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_GT(records[0].loss, 0.5 * 64);
  EXPECT_LT(records[0].loss, 2.0 * 64);
}

TEST(Train, ResumeIsBitwiseEqualToUninterruptedRun) {
  const auto t = tiny_data();
  const auto dir = std::filesystem::temp_directory_path() / "semmix_train_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  const ModelCheckpoint full = train(t.data, tiny_train_config(4));
  TrainHooks hooks;
  hooks.checkpoint_path = dir / "half.ckpt";
  const ModelCheckpoint half = train(t.data, tiny_train_config(2), hooks);
  const ModelCheckpoint resumed = train(t.data, tiny_train_config(4), {}, load_checkpoint(dir / "half.ckpt"));
  EXPECT_EQ(resumed.weights, full.weights);
  EXPECT_EQ(resumed.ema_weights, full.ema_weights);
  EXPECT_EQ(resumed.optimizer->second_moment, full.optimizer->second_moment);
  EXPECT_EQ(resumed.rng_state, full.rng_state);
  EXPECT_NE(half.weights, full.weights);

  TrainConfig other = tiny_train_config(4);
  other.learning_rate = 5e-4;
  EXPECT_THROW(train(t.data, other, {}, half), Error);
  TrainConfig shorter = tiny_train_config(1);
  EXPECT_THROW(train(t.data, shorter, {}, half), Error);
  TrainingData changed = t.data;
  changed.fingerprint = "different";
  EXPECT_THROW(train(changed, tiny_train_config(4), {}, half), Error);
  std::filesystem::remove_all(dir);
}

TEST(Train, SameSeedGivesSameWeights) {
  const auto t = tiny_data();
  EXPECT_EQ(train(t.data, tiny_train_config(2)).weights, train(t.data, tiny_train_config(2)).weights);
  TrainConfig reseeded = tiny_train_config(2);
  reseeded.seed = 1;
  EXPECT_NE(train(t.data, reseeded).weights, train(t.data, tiny_train_config(2)).weights);
}

TEST(Train, LossFallsOnTinyData) {
  const auto t = tiny_data();
  TrainConfig cfg = tiny_train_config(60);
  cfg.learning_rate = 3e-3;
  cfg.ema_decay = 0.0;
  const auto ckpt = train(t.data, cfg);
  UNetDenoiser model(ckpt);
  UNet<float> init(ckpt.architecture);
  init.init(cfg.seed);
  const UNetDenoiser start(ckpt.architecture, model.schedule(), model.vocabulary(), export_weights(init));
  EXPECT_LT(evaluate_loss(model, t.data, 64, 5), evaluate_loss(start, t.data, 64, 5));
}

}  // namespace
}  // namespace semmix
