// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "semmix/error.hpp"
#include "semmix/manifest.hpp"

namespace semmix {

void TrainConfig::validate() const {
  if (steps < 1) throw_invalid("train steps must be >= 1");
  if (batch_size < 1) throw_invalid("batch size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw_invalid("learning rate must be positive");
  if (schedule_steps < 1) throw_invalid("schedule steps must be >= 1");
  if (!(prompt_dropout >= 0.0 && prompt_dropout < 1.0)) throw_invalid("prompt dropout must lie in [0, 1)");
  if (!(token_dropout >= 0.0 && token_dropout < 1.0)) throw_invalid("token dropout must lie in [0, 1)");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw_invalid("ema decay must lie in [0, 1)");
  if (checkpoint_every < 1) throw_invalid("checkpoint cadence must be >= 1");
  if (log_every < 1) throw_invalid("log cadence must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"schedule", {{"steps", schedule_steps}, {"family", to_string(schedule_family)}}},
          {"prompt_dropout", prompt_dropout},
          {"token_dropout", token_dropout},
          {"ema_decay", ema_decay},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"log_every", log_every},
          {"architecture", architecture.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  try {
    c.steps = doc.value("steps", c.steps);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    if (doc.contains("schedule")) {
      const auto& s = doc.at("schedule");
      c.schedule_steps = s.value("steps", c.schedule_steps);
      c.schedule_family = schedule_family_from_string(s.value("family", std::string(to_string(c.schedule_family))));
    }
    c.prompt_dropout = doc.value("prompt_dropout", c.prompt_dropout);
    c.token_dropout = doc.value("token_dropout", c.token_dropout);
    c.ema_decay = doc.value("ema_decay", c.ema_decay);
    c.seed = doc.value("seed", c.seed);
    c.checkpoint_every = doc.value("checkpoint_every", c.checkpoint_every);
    c.log_every = doc.value("log_every", c.log_every);
    if (doc.contains("architecture")) {
      nlohmann::json arch = c.architecture.to_json();
      arch.update(doc.at("architecture"));
      c.architecture = UNetConfig::from_json(arch);
    }
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string data_fingerprint(const SampleBatch& images, const std::vector<Prompt>& prompts) {
  std::string bytes;
  for (double v : images.values()) {
    const float f = static_cast<float>(v);
    bytes.append(reinterpret_cast<const char*>(&f), sizeof f);
  }
  for (const auto& p : prompts) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      bytes.append(reinterpret_cast<const char*>(&p.tokens[i]), sizeof(TokenId));
      bytes.append(reinterpret_cast<const char*>(&p.scales[i]), sizeof(double));
    }
    bytes.push_back('\n');
  }
  return sha256_hex(bytes);
}

TrainConfig train_config_of(const ModelCheckpoint& ckpt) {
  if (!ckpt.training.contains("config")) throw_invalid("checkpoint carries no training config");
  return TrainConfig::from_json(ckpt.training.at("config"));
}

namespace {

using Clock = std::chrono::steady_clock;

struct Draw {
  std::size_t index;
  int t;
  Prompt prompt;
};

// Drops one concept token from prompts with several.
Prompt drop_one_concept(const Prompt& p, Rng& rng) {
  std::vector<std::size_t> concepts;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.tokens[i] > Vocabulary::kNull) concepts.push_back(i);
  }
  if (concepts.size() < 2) return p;
  std::uniform_int_distribution<std::size_t> pick(0, concepts.size() - 1);
  const std::size_t victim = concepts[pick(rng)];
  Prompt out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i == victim) continue;
    out.tokens.push_back(p.tokens[i]);
    out.scales.push_back(p.scales[i]);
  }
  return out;
}

void check_data(const TrainingData& data) {
  if (!data.images || !data.prompts || !data.vocabulary) throw_invalid("training data is incomplete");
  if (data.images->count() == 0) throw_invalid("training data is empty");
  if (data.images->count() != data.prompts->size()) throw_invalid("need one prompt per training image");
  const auto& s = data.images->shape();
  if (s.height != s.width) throw_invalid("training images must be square");
  for (const auto& p : *data.prompts) {
    try {
      validate_prompt(p, *data.vocabulary);
    } catch (const Error& e) {
      throw_invalid(std::string("training prompt does not fit the model vocabulary: ") + e.what());
    }
  }
}

UNetConfig architecture_for(const TrainConfig& cfg, const TrainingData& data) {
  UNetConfig arch = cfg.architecture;
  arch.vocab_size = static_cast<int>(data.vocabulary->size());
  arch.in_channels = data.images->shape().channels;
  arch.image_size = data.images->shape().height;
  arch.validate();
  return arch;
}

void fill_inputs(const NoiseSchedule& sched, const SampleBatch& images, const std::vector<Draw>& draws,
                 Rng& rng, nn::Tensor<float>& x, nn::Tensor<float>& target) {
  const auto shape = images.shape();
  const auto n = static_cast<int>(draws.size());
  x = nn::Tensor<float>(shape.channels, n, shape.height, shape.width);
  target = x;
  const std::size_t plane = x.plane();
  std::vector<double> eps(shape.size());
  for (int b = 0; b < n; ++b) {
    const auto& d = draws[static_cast<std::size_t>(b)];
    fill_normal(eps, rng);
    const auto x0 = images.sample(d.index);
    const double a = sched.alpha(d.t);
    const double s = sched.sigma(d.t);
    for (int c = 0; c < shape.channels; ++c) {
      float* xp = x.plane_ptr(c, b);
      float* tp = target.plane_ptr(c, b);
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = static_cast<std::size_t>(c) * plane + i;
        xp[i] = static_cast<float>(a * x0[k] + s * eps[k]);
        tp[i] = static_cast<float>(eps[k]);
      }
    }
  }
}

WeightSet zeros_like(const WeightSet& w) {
  WeightSet out;
  for (const auto& blob : w) out.emplace_back(blob.size(), 0.0f);
  return out;
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& s) {
  std::istringstream is(s);
  Rng rng;
  is >> rng;
  if (!is) throw_invalid("checkpoint rng state is unreadable");
  return rng;
}

void append_log(const std::filesystem::path& path, const TrainRecord& r) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw_io("cannot append to training log " + path.string());
  if (fresh) out << "step\tloss\tlr\twall_seconds\n";
  out.precision(9);
  out << r.step << '\t' << r.loss << '\t' << r.learning_rate << '\t' << r.wall_seconds << '\n';
}

}  // namespace

ModelCheckpoint train(const TrainingData& data, const TrainConfig& cfg, const TrainHooks& hooks,
                      const std::optional<ModelCheckpoint>& resume) {
  cfg.validate();
  check_data(data);
  const UNetConfig arch = architecture_for(cfg, data);
  const NoiseSchedule sched(cfg.schedule_steps, cfg.schedule_family);
  const std::string fingerprint =
      data.fingerprint.empty() ? data_fingerprint(*data.images, *data.prompts) : data.fingerprint;

  UNet<float> net(arch);
  Rng rng = make_rng(cfg.seed, 1);
  int start = 0;
  WeightSet m, v;
  std::optional<WeightSet> ema;
  if (resume) {
    if (!(resume->architecture == arch)) throw_invalid("resume: architecture differs from the config");
    if (!(resume->vocabulary == *data.vocabulary)) throw_invalid("resume: vocabulary differs from the data");
    if (!(NoiseSchedule::from_description(resume->schedule) == sched)) throw_invalid("resume: schedule differs");
    if (resume->training.value("data_fingerprint", "") != fingerprint) throw_invalid("resume: training data differs");
    TrainConfig prior = train_config_of(*resume);
    prior.steps = cfg.steps;
    prior.checkpoint_every = cfg.checkpoint_every;
    prior.log_every = cfg.log_every;
    if (prior.to_json() != cfg.to_json()) throw_invalid("resume: training config differs beyond steps and cadence");
    if (!resume->optimizer) throw_invalid("resume: checkpoint has no optimizer state");
    import_weights(net, resume->weights);
    m = resume->optimizer->first_moment;
    v = resume->optimizer->second_moment;
    start = static_cast<int>(resume->optimizer->step);
    rng = rng_from_string(resume->rng_state);
    if (cfg.ema_decay > 0.0) {
      if (!resume->ema_weights) throw_invalid("resume: checkpoint has no EMA weights");
      ema = resume->ema_weights;
    }
    if (start > cfg.steps) throw_invalid("resume: checkpoint is already past the requested steps");
  } else {
    net.init(cfg.seed);
    const WeightSet w = export_weights(net);
    m = zeros_like(w);
    v = zeros_like(w);
    if (cfg.ema_decay > 0.0) ema = w;
  }

  auto& params = net.parameters();
  const auto t0 = Clock::now();
  double last_loss = resume ? resume->training.value("loss", 0.0) : 0.0;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  auto snapshot = [&](int step) {
    ModelCheckpoint ckpt;
    ckpt.architecture = arch;
    ckpt.schedule = sched.describe();
    ckpt.vocabulary = *data.vocabulary;
    ckpt.training = {{"config", cfg.to_json()}, {"step", step}, {"loss", last_loss},
                     {"data_fingerprint", fingerprint}};
    ckpt.weights = export_weights(net);
    ckpt.ema_weights = ema;
    ckpt.optimizer = OptimizerState{step, m, v};
    ckpt.rng_state = rng_to_string(rng);
    return ckpt;
  };

  const auto& images = *data.images;
  const auto& prompts = *data.prompts;
  const std::size_t n_images = images.count();
  nn::Tensor<float> x, target;
  for (int step = start + 1; step <= cfg.steps; ++step) {
    std::uniform_int_distribution<std::size_t> pick_image(0, n_images - 1);
    std::uniform_int_distribution<int> pick_t(1, sched.steps());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Draw> draws;
    std::vector<Prompt> batch_prompts;
    std::vector<double> steps;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Draw d;
      d.index = pick_image(rng);
      d.t = pick_t(rng);
      const double u_prompt = unit(rng);
      const double u_token = unit(rng);
      if (u_prompt < cfg.prompt_dropout) d.prompt = Prompt::null_prompt();
      else if (u_token < cfg.token_dropout) d.prompt = drop_one_concept(prompts[d.index], rng);
      else d.prompt = prompts[d.index];
      batch_prompts.push_back(d.prompt);
      steps.push_back(d.t);
      draws.push_back(std::move(d));
    }
    fill_inputs(sched, images, draws, rng, x, target);

    UNetTape<float> tape;
    nn::Tensor<float> y = net.forward(x, steps, batch_prompts, &tape);
    double loss = 0.0;
    const float scale = 2.0f / static_cast<float>(cfg.batch_size);
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      const float e = y.data[i] - target.data[i];
      loss += static_cast<double>(e) * e;
      y.data[i] = scale * e;
    }
    loss /= cfg.batch_size;
    if (!std::isfinite(loss)) {
      throw_numeric("training loss became non-finite at step " + std::to_string(step));
    }
    last_loss = loss;
    net.zero_grad();
    net.backward(y, tape);

    const double c1 = 1.0 - std::pow(kBeta1, step);
    const double c2 = 1.0 - std::pow(kBeta2, step);
    const auto step_size = static_cast<float>(cfg.learning_rate / c1);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    const double ema_d = std::min(cfg.ema_decay, (1.0 + step) / (10.0 + step));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto w = Eigen::Map<Eigen::ArrayXf>(params[p]->value.data(), params[p]->value.size());
      const auto g = Eigen::Map<const Eigen::ArrayXf>(params[p]->grad.data(), params[p]->grad.size());
      auto mp = Eigen::Map<Eigen::ArrayXf>(m[p].data(), static_cast<Eigen::Index>(m[p].size()));
      auto vp = Eigen::Map<Eigen::ArrayXf>(v[p].data(), static_cast<Eigen::Index>(v[p].size()));
      mp = static_cast<float>(kBeta1) * mp + static_cast<float>(1.0 - kBeta1) * g;
      vp = static_cast<float>(kBeta2) * vp + static_cast<float>(1.0 - kBeta2) * g.square();
      w -= step_size * mp / ((vp * inv_c2).sqrt() + static_cast<float>(kEps));
      if (ema) {
        auto e = Eigen::Map<Eigen::ArrayXf>((*ema)[p].data(), static_cast<Eigen::Index>((*ema)[p].size()));
        e = static_cast<float>(ema_d) * e + static_cast<float>(1.0 - ema_d) * w;
      }
    }

    if (step % cfg.log_every == 0 || step == cfg.steps) {
      const TrainRecord rec{step, loss, cfg.learning_rate,
                            std::chrono::duration<double>(Clock::now() - t0).count()};
      if (hooks.log_path) append_log(*hooks.log_path, rec);
      if (hooks.on_record) hooks.on_record(rec);
    }
    if (hooks.checkpoint_path && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      save_checkpoint(snapshot(step), *hooks.checkpoint_path);
    }
  }
  ModelCheckpoint final_ckpt = snapshot(cfg.steps);
  if (hooks.checkpoint_path) save_checkpoint(final_ckpt, *hooks.checkpoint_path);
  return final_ckpt;
}

double evaluate_loss(const UNetDenoiser& model, const TrainingData& data, int count, std::uint64_t seed) {
  check_data(data);
  if (count < 1) throw_invalid("evaluation needs at least one draw");
  const NoiseSchedule& sched = model.schedule();
  Rng rng = make_rng(seed, 2);
  std::uniform_int_distribution<std::size_t> pick_image(0, data.images->count() - 1);
  std::uniform_int_distribution<int> pick_t(1, sched.steps());
  const auto shape = data.images->shape();
  double total = 0.0;
  constexpr int kChunk = 32;
  std::vector<double> eps(shape.size());
  for (int done = 0; done < count;) {
    const int n = std::min(kChunk, count - done);
    // One step per chunk keeps the network call batched.
    const int t = pick_t(rng);
    SampleBatch x(shape, static_cast<std::size_t>(n));
    SampleBatch target(shape, static_cast<std::size_t>(n));
    std::vector<Prompt> ps;
    for (int b = 0; b < n; ++b) {
      const std::size_t idx = pick_image(rng);
      fill_normal(eps, rng);
      const auto x0 = data.images->sample(idx);
      auto xs = x.sample(static_cast<std::size_t>(b));
      auto ts = target.sample(static_cast<std::size_t>(b));
      for (std::size_t i = 0; i < eps.size(); ++i) {
        xs[i] = sched.alpha(t) * x0[i] + sched.sigma(t) * eps[i];
        ts[i] = eps[i];
      }
      ps.push_back((*data.prompts)[idx]);
    }
    const SampleBatch pred = model.predict_eps(x, t, ps);
    for (std::size_t i = 0; i < pred.values().size(); ++i) {
      const double e = pred.values()[i] - target.values()[i];
      total += e * e;
    }
    done += n;
  }
  return total / count;
}

// ---------------------------------------------------------------- gradcheck

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
}

}  // namespace

GradcheckReport finite_diff_gradcheck(const UNetConfig& config, const GradcheckOptions& opt) {
  config.validate();
  if (config.vocab_size < 5) throw_invalid("gradcheck needs at least two concept tokens");
  UNet<double> net(config);
  if (net.parameter_count() > 10000) throw_invalid("gradcheck is meant for tiny models (<= 10k parameters)");
  net.init(opt.seed);
  Rng rng = make_rng(opt.seed, 3);
  std::normal_distribution<double> perturb(0.0, 0.1);
  // Zero-initialized output layers would otherwise block every gradient path.
  for (auto* p : net.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += perturb(rng);
  }
  const int n = opt.batch;
  const int side = config.image_size;
  nn::Tensor<double> x(config.in_channels, n, side, side);
  nn::Tensor<double> target = x;
  std::normal_distribution<double> normal(0.0, 1.0);
  if (!opt.zero_input) {
    for (auto& v : x.data) v = normal(rng);
  }
  for (auto& v : target.data) v = normal(rng);
  std::uniform_int_distribution<int> pick_t(1, 1000);
  std::uniform_int_distribution<TokenId> pick_token(3, config.vocab_size - 1);
  std::vector<double> steps;
  std::vector<Prompt> prompts;
  for (int b = 0; b < n; ++b) {
    steps.push_back(pick_t(rng));
    if (b % 2 == 1) {
      prompts.push_back(Prompt::null_prompt());
    } else {
      prompts.push_back({{Vocabulary::kBos, pick_token(rng), pick_token(rng), Vocabulary::kEos},
                         {1.0, 1.5, -0.5, 1.0}});
    }
  }
  auto loss_of = [&](nn::Tensor<double>* grad_out, UNetTape<double>* tape) {
    nn::Tensor<double> y = net.forward(x, steps, prompts, tape);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      const double e = y.data[i] - target.data[i];
      loss += e * e;
      y.data[i] = 2.0 * e / n;
    }
    if (grad_out) *grad_out = std::move(y);
    return loss / n;
  };
  UNetTape<double> tape;
  nn::Tensor<double> d_out;
  net.zero_grad();
  loss_of(&d_out, &tape);
  net.backward(d_out, tape);

  GradcheckReport report;
  report.tolerance = opt.tolerance;
  for (auto* p : net.parameters()) {
    for (Eigen::Index i = 0; i < p->grad.size(); ++i) {
      if (!std::isfinite(p->grad.data()[i])) report.all_finite = false;
    }
    const auto size = static_cast<std::size_t>(p->value.size());
    std::vector<std::size_t> coords;
    if (size <= static_cast<std::size_t>(opt.coordinates_per_parameter)) {
      for (std::size_t i = 0; i < size; ++i) coords.push_back(i);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, size - 1);
      for (int k = 0; k < opt.coordinates_per_parameter; ++k) coords.push_back(pick(rng));
    }
    for (auto i : coords) {
      double& w = p->value.data()[i];
      const double orig = w;
      w = orig + opt.step;
      const double up = loss_of(nullptr, nullptr);
      w = orig - opt.step;
      const double down = loss_of(nullptr, nullptr);
      w = orig;
      const double numeric = (up - down) / (2 * opt.step);
      const double rel = relative_error(p->grad.data()[i], numeric);
      ++report.coordinates;
      if (rel <= opt.tolerance) ++report.within_tolerance;
      report.max_relative_error = std::max(report.max_relative_error, rel);
    }
  }
  return report;
}

GradcheckReport linear_head_gradcheck(std::uint64_t seed, double tolerance) {
  Rng rng = make_rng(seed, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd w(3, 5), x(5, 4), y(3, 4);
  Eigen::VectorXd b(3);
  for (auto* m : {&w, &x, &y}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = normal(rng);
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = normal(rng);
  auto loss_of = [&] { return ((w * x).colwise() + b - y).squaredNorm(); };
  const Eigen::MatrixXd r = (w * x).colwise() + b - y;
  const Eigen::MatrixXd gw = 2.0 * r * x.transpose();
  const Eigen::VectorXd gb = 2.0 * r.rowwise().sum();
  GradcheckReport report;
  report.tolerance = tolerance;
  constexpr double h = 1e-3;
  auto probe = [&](double& param, double analytic) {
    const double orig = param;
    param = orig + h;
    const double up = loss_of();
    param = orig - h;
    const double down = loss_of();
    param = orig;
    const double rel = relative_error(analytic, (up - down) / (2 * h));
    ++report.coordinates;
    if (rel <= tolerance) ++report.within_tolerance;
    report.max_relative_error = std::max(report.max_relative_error, rel);
  };
  for (Eigen::Index i = 0; i < w.size(); ++i) probe(w.data()[i], gw.data()[i]);
  for (Eigen::Index i = 0; i < b.size(); ++i) probe(b[i], gb[i]);
  return report;
}

}  // namespace semmix
