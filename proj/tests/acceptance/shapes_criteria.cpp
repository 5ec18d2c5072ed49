// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end criteria on the shapes world. They need the reference
// checkpoint and the dataset it was trained on.

#include <memory>
#include <numeric>

#include "criteria.hpp"
#include "semmix/checkpoint.hpp"
#include "semmix/classifier.hpp"
#include "semmix/mix.hpp"
#include "semmix/sampler.hpp"
#include "semmix/shapes.hpp"

namespace semmix::acceptance {
namespace {

// Frozen after the calibration run on the reference model.
constexpr double kGuidance = 3.0;
constexpr int kSamplesPerClass = 8;
constexpr int kLayoutsPerShape = 2;
constexpr int kSeedsPerLayout = 2;
constexpr double kConditionalAccuracy = 0.80;
constexpr double kContentDetection = 0.60;
constexpr double kRemovalDetection = 0.20;

const std::vector<double> kNus{0.0, 0.25, 0.5, 0.75, 1.0};
const std::vector<double> kRemovalScales{0.0, -0.5, -1.0, -2.0};

struct ShapesEnv {
  ShapesDataset data;
  std::unique_ptr<UNetDenoiser> model;
  AttributeClassifier clf;
  double clf_holdout = 0.0;
  int side = 0;
};

const ShapesEnv& shapes_env(const Context& ctx) {
  static std::unique_ptr<ShapesEnv> env;
  if (env) return *env;
  auto e = std::make_unique<ShapesEnv>();
  e->data = load_dataset(*ctx.data);
  e->model = std::make_unique<UNetDenoiser>(load_checkpoint(*ctx.model));
  if (!(e->model->vocabulary() == e->data.vocabulary)) throw std::runtime_error("model and dataset vocabularies differ");
  e->clf = AttributeClassifier::train(e->data);
  e->side = e->data.spec.image_size;
  ShapesSpec held = e->data.spec;
  held.seed = e->data.spec.seed + 1000;
  held.count_per_class = 20;
  const ShapesDataset test = generate_shapes(held);
  int ok = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto p = e->clf.predict(test.images.sample(i));
    ok += p.shape == test.params[i].shape && p.texture == test.params[i].texture ? 1 : 0;
  }
  e->clf_holdout = static_cast<double>(ok) / static_cast<double>(test.size());
  env = std::move(e);
  return *env;
}

std::size_t class_offset(const ShapesSpec& spec, int shape, int texture) {
  return static_cast<std::size_t>(shape * static_cast<int>(spec.textures.size()) + texture) *
         static_cast<std::size_t>(spec.count_per_class);
}

// Layout images of one texture: kLayoutsPerShape per shape, each repeated
// kSeedsPerLayout times.
SampleBatch layout_batch(const ShapesEnv& env, int texture) {
  SampleBatch out(env.data.images.shape(), 0);
  for (int s = 0; s < static_cast<int>(env.data.spec.shapes.size()); ++s) {
    for (int j = 0; j < kLayoutsPerShape; ++j) {
      const auto img = env.data.images.slice(class_offset(env.data.spec, s, texture) + static_cast<std::size_t>(j), 1);
      for (int r = 0; r < kSeedsPerLayout; ++r) out.append(img);
    }
  }
  return out;
}

double mean_iou(const ShapesEnv& env, const SampleBatch& a, const SampleBatch& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.count(); ++i) sum += silhouette_iou(a.sample(i), b.sample(i), env.side);
  return sum / static_cast<double>(a.count());
}

// IoU of unconditional samples against the given layouts, paired by run.
double unconditional_iou(const ShapesEnv& env, const SampleBatch& layouts, std::uint64_t seed) {
  const StepPlan plan = make_step_plan(env.model->schedule(), kDefaultInferenceSteps);
  auto rngs = make_rngs(seed, layouts.count());
  const auto x = sample(*env.model, Prompt::null_prompt(), plan, 1.0, rngs, false).x0;
  return mean_iou(env, x, layouts);
}

MixConfig mix_config(double nu, std::uint64_t seed) {
  MixConfig cfg;
  cfg.nu = nu;
  cfg.guidance = kGuidance;
  cfg.seed = seed;
  return cfg;
}

Outcome shapes_end_to_end(const Context& ctx) {
  const ShapesEnv& env = shapes_env(ctx);
  const auto& spec = env.data.spec;
  const int n_shapes = static_cast<int>(spec.shapes.size()), n_textures = static_cast<int>(spec.textures.size());

  // (a) conditional generation per class.
  const StepPlan plan = make_step_plan(env.model->schedule(), kDefaultInferenceSteps);
  int correct = 0, total = 0;
  for (int s = 0; s < n_shapes; ++s) {
    for (int t = 0; t < n_textures; ++t) {
      const Prompt p = parse_prompt(spec.shapes[static_cast<std::size_t>(s)] + " " + spec.textures[static_cast<std::size_t>(t)],
                                    env.model->vocabulary());
      auto rngs = make_rngs(static_cast<std::uint64_t>(1000 + s * n_textures + t), kSamplesPerClass);
      const auto x = sample(*env.model, p, plan, kGuidance, rngs, false).x0;
      for (std::size_t i = 0; i < x.count(); ++i) {
        const auto pred = env.clf.predict(x.sample(i));
        correct += pred.shape == s && pred.texture == t ? 1 : 0;
        ++total;
      }
    }
  }
  const double accuracy = static_cast<double>(correct) / total;

  // (b), (c) image-text mixing: solid layouts, texture-only content prompts.
  const int solid = 0;
  const SampleBatch layouts = layout_batch(env, solid);
  const double baseline = unconditional_iou(env, layouts, 500);
  std::vector<double> detection(kNus.size(), 0.0), iou(kNus.size(), 0.0);
  int contents = 0;
  for (int t = 0; t < n_textures; ++t) {
    if (t == solid) continue;
    ++contents;
    const Prompt content = parse_prompt(spec.textures[static_cast<std::size_t>(t)], env.model->vocabulary());
    for (std::size_t j = 0; j < kNus.size(); ++j) {
      const MixConfig cfg = mix_config(kNus[j], static_cast<std::uint64_t>(600 + t));
      auto rngs = make_rngs(cfg.seed, layouts.count());
      const auto out = mix_image_text(*env.model, layouts, content, cfg, rngs).output;
      detection[j] += texture_rate(env.clf, out, t);
      iou[j] += mean_iou(env, out, layouts);
    }
  }
  std::string detail = format("classifier held-out accuracy %.3f; (a) conditional accuracy %.3f (%d/%d, min %.2f); "
                              "(b) unconditional IoU baseline %.3f;",
                              env.clf_holdout, accuracy, correct, total, kConditionalAccuracy, baseline);
  bool monotone = true;
  std::size_t half = 0;
  for (std::size_t j = 0; j < kNus.size(); ++j) {
    detection[j] /= contents;
    iou[j] /= contents;
    if (kNus[j] == 0.5) half = j;
    if (j > 0 && detection[j] < detection[j - 1]) monotone = false;
    detail += format(" nu=%.2f: detection %.3f IoU %.3f;", kNus[j], detection[j], iou[j]);
  }
  const bool a_ok = accuracy >= kConditionalAccuracy;
  const bool b_ok = iou[half] > baseline && detection[half] >= kContentDetection;
  detail += format(" (b) at nu=0.5 needs IoU > baseline and detection >= %.2f; (c) detection non-decreasing=%d",
                   kContentDetection, monotone);
  return {a_ok && b_ok && monotone, detail};
}

Outcome attention_reweighting(const Context& ctx) {
  const ShapesEnv& env = shapes_env(ctx);
  const auto& spec = env.data.spec;
  const UNetDenoiser& model = *env.model;
  const Vocabulary& vocab = model.vocabulary();

  // s = 1 is a no-op and s = 0 equals zeroing the token's value vector.
  auto rr = make_rngs(77, 4);
  const SampleBatch x = normal_batch(model.sample_shape(), rr);
  bool noop = true;
  double mask_err = 0.0;
  for (int t : {200, 500, 900}) {
    noop = noop && model.predict_eps(x, t, parse_prompt("star dotted:1", vocab)) ==
                       model.predict_eps(x, t, parse_prompt("star dotted", vocab));
    const Prompt plain = parse_prompt("star dotted", vocab);
    const std::vector<Prompt> prompts(x.count(), plain);
    for (int pos : {1, 2}) {
      Prompt zero = plain;
      zero.scales[static_cast<std::size_t>(pos)] = 0.0;
      AttentionCapture capture;
      capture.masked_values = {pos};
      const auto a = model.predict_eps(x, t, zero);
      const auto b = model.predict_eps_with_attention(x, t, prompts, capture);
      for (std::size_t i = 0; i < a.values().size(); ++i) mask_err = std::max(mask_err, std::abs(a.values()[i] - b.values()[i]));
    }
  }
  MixConfig one = mix_config(0.5, 3);
  auto m1 = make_rngs(3, 2), m2 = make_rngs(3, 2);
  const SampleBatch probe_layouts = env.data.images.slice(0, 2);
  noop = noop && mix_image_text(model, probe_layouts, parse_prompt("circle:1 striped:1", vocab), one, m1).output ==
                     mix_image_text(model, probe_layouts, parse_prompt("circle striped", vocab), one, m2).output;

  // Concept removal: textured layouts mixed with their own class prompt,
  // the texture token scaled by s.
  const int n_textures = static_cast<int>(spec.textures.size());
  std::vector<double> detection(kRemovalScales.size(), 0.0), iou(kRemovalScales.size(), 0.0);
  double baseline = 0.0;
  int groups = 0;
  for (int t = 1; t < n_textures; ++t) {
    const SampleBatch layouts = layout_batch(env, t);
    baseline += unconditional_iou(env, layouts, static_cast<std::uint64_t>(700 + t));
    ++groups;
    for (std::size_t j = 0; j < kRemovalScales.size(); ++j) {
      SampleBatch out(layouts.shape(), 0);
      for (int s = 0; s < static_cast<int>(spec.shapes.size()); ++s) {
        const std::size_t per = static_cast<std::size_t>(kLayoutsPerShape * kSeedsPerLayout);
        const SampleBatch part = layouts.slice(static_cast<std::size_t>(s) * per, per);
        Prompt p = parse_prompt(spec.shapes[static_cast<std::size_t>(s)] + " " + spec.textures[static_cast<std::size_t>(t)], vocab);
        p.scales[2] = kRemovalScales[j];
        const MixConfig cfg = mix_config(0.5, static_cast<std::uint64_t>(800 + t * 10 + s));
        auto rngs = make_rngs(cfg.seed, part.count());
        out.append(kRemovalScales[j] < 0 ? remove_concept(model, part, p, cfg, rngs).output
                                         : mix_image_text(model, part, p, cfg, rngs).output);
      }
      detection[j] += texture_rate(env.clf, out, t);
      iou[j] += mean_iou(env, out, layouts);
    }
  }
  baseline /= groups;
  std::string detail = format("s=1 bitwise no-op=%d; s=0 vs value masking max diff %.2e (tol 1e-6); "
                              "removal (unconditional IoU baseline %.3f):",
                              noop, mask_err, baseline);
  bool monotone = true;
  std::size_t minus_one = 0;
  for (std::size_t j = 0; j < kRemovalScales.size(); ++j) {
    detection[j] /= groups;
    iou[j] /= groups;
    if (kRemovalScales[j] == -1.0) minus_one = j;
    if (j > 0 && detection[j] > detection[j - 1]) monotone = false;
    detail += format(" s=%.1f: detection %.3f IoU %.3f;", kRemovalScales[j], detection[j], iou[j]);
  }
  const bool removal = detection[minus_one] < kRemovalDetection && iou[minus_one] > baseline;
  detail += format(" s=-1 needs detection < %.2f and IoU > baseline; strength monotone in |s|=%d", kRemovalDetection,
                   monotone);
  return {noop && mask_err <= 1e-6 && removal && monotone, detail};
}

}  // namespace

std::vector<Criterion> shapes_criteria() {
  return {
      {"shapes_end_to_end", 0.0, true, shapes_end_to_end},
      {"attention_reweighting", 0.0, true, attention_reweighting},
  };
}

}  // namespace semmix::acceptance
