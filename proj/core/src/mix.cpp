// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/mix.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "semmix/error.hpp"

namespace semmix {

std::string_view to_string(LayoutNoiseMode mode) {
  return mode == LayoutNoiseMode::kSharedEps ? "shared-eps" : "ddim-inversion";
}

LayoutNoiseMode layout_noise_mode_from_string(std::string_view name) {
  if (name == "shared-eps") return LayoutNoiseMode::kSharedEps;
  if (name == "ddim-inversion") return LayoutNoiseMode::kDdimInversion;
  throw_invalid("unknown layout noise mode '" + std::string(name) + "'");
}

void MixConfig::validate() const {
  if (!(kmax > 0.0 && kmax <= 1.0)) throw_invalid("kmax must lie in (0, 1]");
  if (!(kmin >= 0.0 && kmin < kmax)) throw_invalid("kmin must lie in [0, kmax)");
  if (!(nu >= 0.0 && nu <= 1.0)) throw_invalid("nu must lie in [0, 1]");
  if (!(guidance >= 0.0) || !std::isfinite(guidance)) throw_invalid("guidance must be >= 0");
  if (steps < 1) throw_invalid("steps must be >= 1");
  if (!(eta >= 0.0 && eta <= 1.0)) throw_invalid("eta must lie in [0, 1]");
}

nlohmann::json MixConfig::to_json() const {
  return {{"kmax", kmax},   {"kmin", kmin}, {"nu", nu},     {"guidance", guidance},
          {"steps", steps}, {"eta", eta},   {"seed", seed}, {"layout_noise_mode", to_string(layout_noise_mode)}};
}

MixConfig MixConfig::from_json(const nlohmann::json& doc) { return from_json(doc, MixConfig{}); }

MixConfig MixConfig::from_json(const nlohmann::json& doc, const MixConfig& base) {
  if (!doc.is_object()) throw_invalid("mix config must be an object");
  static const std::set<std::string> known{"kmax", "kmin", "nu", "guidance", "steps", "eta", "seed", "layout_noise_mode"};
  MixConfig c = base;
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw_invalid("unknown mix config field '" + key + "'");
    try {
      if (key == "kmax") c.kmax = value.get<double>();
      else if (key == "kmin") c.kmin = value.get<double>();
      else if (key == "nu") c.nu = value.get<double>();
      else if (key == "guidance") c.guidance = value.get<double>();
      else if (key == "steps") c.steps = value.get<int>();
      else if (key == "eta") c.eta = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else c.layout_noise_mode = layout_noise_mode_from_string(value.get<std::string>());
    } catch (const nlohmann::json::exception&) {
      throw_invalid("mix config field '" + key + "' has the wrong type");
    }
  }
  c.validate();
  return c;
}

MixWindow mix_window(const StepPlan& plan, int total_steps, double kmax, double kmin) {
  if (plan.indices.empty()) throw_invalid("mix_window: empty plan");
  constexpr double kSlack = 1e-9;
  const double hi = kmax * total_steps;
  const double lo = kmin * total_steps;
  MixWindow w;
  w.k_max = plan.indices.front();
  for (int k : plan.indices) {
    if (k >= hi - kSlack) w.k_max = k;
  }
  w.k_min = 0;
  for (int k : plan.indices) {
    if (k <= lo + kSlack) {
      w.k_min = k;
      break;
    }
  }
  if (w.k_min >= w.k_max) throw_invalid("mix window is empty for this plan");
  return w;
}

std::vector<int> window_indices(const StepPlan& plan, const MixWindow& window) {
  std::vector<int> out;
  for (int k : plan.with_terminal()) {
    if (k <= window.k_max && k >= window.k_min) out.push_back(k);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

Trajectory layout_noises_from_image(const Denoiser* model, const NoiseSchedule& sched,
                                    const SampleBatch& x0, const MixConfig& cfg,
                                    std::vector<Rng>& rngs, const Prompt& layout_prompt) {
  cfg.validate();
  const StepPlan plan = make_step_plan(sched, cfg.steps, cfg.eta);
  const MixWindow window = mix_window(plan, sched.steps(), cfg.kmax, cfg.kmin);
  const auto ks = window_indices(plan, window);
  if (cfg.layout_noise_mode == LayoutNoiseMode::kDdimInversion) {
    if (model == nullptr) throw_invalid("ddim-inversion layout noise needs a model");
    Trajectory full = ddim_invert(*model, x0, layout_prompt, plan, 1.0, window.k_max);
    Trajectory out;
    out.source = TrajectorySource::kForwardFromImage;
    for (int k : ks) out.push(k, full.at(k));
    return out;
  }
  if (rngs.size() != x0.count()) throw_invalid("layout noise: need one generator per run");
  SampleBatch eps(x0.shape(), x0.count());
  for (std::size_t b = 0; b < x0.count(); ++b) fill_normal(eps.sample(b), rngs[b]);
  return noised_layout(sched, x0, eps, cfg);
}

Trajectory noised_layout(const NoiseSchedule& sched, const SampleBatch& x0, const SampleBatch& eps,
                         const MixConfig& cfg) {
  cfg.validate();
  if (!x0.same_layout(eps)) throw_invalid("layout noise: eps layout differs from the image batch");
  const StepPlan plan = make_step_plan(sched, cfg.steps, cfg.eta);
  const MixWindow window = mix_window(plan, sched.steps(), cfg.kmax, cfg.kmin);
  Trajectory out;
  out.source = TrajectorySource::kForwardFromImage;
  for (int k : window_indices(plan, window)) {
    SampleBatch xk(x0.shape(), x0.count());
    const double a = sched.alpha(k);
    const double s = sched.sigma(k);
    auto v = xk.values();
    const auto c = x0.values();
    const auto e = eps.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * c[i] + s * e[i];
    out.push(k, std::move(xk));
  }
  return out;
}

Trajectory layout_noises_from_prompt(const Denoiser& model, const Prompt& layout_prompt,
                                     const MixConfig& cfg, std::vector<Rng>& rngs) {
  cfg.validate();
  const StepPlan plan = make_step_plan(model.schedule(), cfg.steps, cfg.eta);
  const MixWindow window = mix_window(plan, model.schedule().steps(), cfg.kmax, cfg.kmin);
  if (rngs.empty()) throw_invalid("layout noise: need at least one run");
  const SampleBatch noise = normal_batch(model.sample_shape(), rngs);
  const auto run = denoise(model, noise, plan.indices.front(), layout_prompt, plan, cfg.guidance,
                           rngs, true, window.k_min);
  Trajectory out;
  out.source = TrajectorySource::kReverseConditional;
  for (int k : window_indices(plan, window)) out.push(k, run.trajectory->at(k));
  return out;
}

MixResult mix(const Denoiser& model, const Trajectory& layout, const Prompt& content,
              const MixConfig& cfg, std::vector<Rng>& rngs, bool record) {
  const auto start = Clock::now();
  cfg.validate();
  validate_prompt(content, model.vocabulary());
  const NoiseSchedule& sched = model.schedule();
  const StepPlan plan = make_step_plan(sched, cfg.steps, cfg.eta);
  const MixWindow window = mix_window(plan, sched.steps(), cfg.kmax, cfg.kmin);
  for (int k : window_indices(plan, window)) {
    if (!layout.contains(k)) throw_invalid("layout trajectory is missing index " + std::to_string(k));
  }
  MixResult result;
  result.config = cfg;
  result.layout = layout;
  if (record) result.trajectory.emplace();

  const auto path = plan.with_terminal();
  auto it = std::find(path.begin(), path.end(), window.k_max);
  SampleBatch x = layout.at(window.k_max);
  if (record) result.trajectory->push(*it, x);
  for (; *it != 0; ++it) {
    const int k = *it;
    const int k_prev = *(it + 1);
    SampleBatch stepped = reverse_step(model, x, k, k_prev, content, cfg.guidance, cfg.eta, rngs);
    if (k_prev >= window.k_min && cfg.nu != 1.0) {
      const SampleBatch& lay = layout.at(k_prev);
      if (cfg.nu == 0.0) {
        stepped = lay;
      } else {
        auto v = stepped.values();
        const auto l = lay.values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = cfg.nu * v[i] + (1.0 - cfg.nu) * l[i];
      }
    }
    if (!stepped.all_finite()) throw_numeric("mix: non-finite state at index " + std::to_string(k_prev));
    x = std::move(stepped);
    if (record) result.trajectory->push(k_prev, x);
  }
  result.output = std::move(x);
  result.wall_seconds = seconds_since(start);
  return result;
}

MixResult mix_image_text(const Denoiser& model, const SampleBatch& x0, const Prompt& content,
                         const MixConfig& cfg, std::vector<Rng>& rngs, bool record) {
  const auto start = Clock::now();
  const Trajectory layout = layout_noises_from_image(&model, model.schedule(), x0, cfg, rngs);
  MixResult r = mix(model, layout, content, cfg, rngs, record);
  r.wall_seconds = seconds_since(start);
  return r;
}

MixResult mix_text_text(const Denoiser& model, const Prompt& layout_prompt, const Prompt& content,
                        const MixConfig& cfg, std::vector<Rng>& rngs, bool record) {
  const auto start = Clock::now();
  validate_prompt(layout_prompt, model.vocabulary());
  const Trajectory layout = layout_noises_from_prompt(model, layout_prompt, cfg, rngs);
  MixResult r = mix(model, layout, content, cfg, rngs, record);
  r.wall_seconds = seconds_since(start);
  return r;
}

MixResult remove_concept(const Denoiser& model, const SampleBatch& x0, const Prompt& prompt,
                         const MixConfig& cfg, std::vector<Rng>& rngs, bool record) {
  if (!prompt.has_negative_scale()) throw_invalid("concept removal needs a negative token scale");
  return mix_image_text(model, x0, prompt, cfg, rngs, record);
}

}  // namespace semmix
