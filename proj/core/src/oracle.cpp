// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "semmix/error.hpp"

namespace semmix {

MixtureWorld::MixtureWorld(int dimension, std::vector<std::string> classes,
                           std::vector<MixtureComponent> components)
    : dimension_(dimension), classes_(std::move(classes)), components_(std::move(components)),
      vocab_(classes_) {
  if (dimension_ < 1) throw_invalid("world dimension must be >= 1");
  if (classes_.empty()) throw_invalid("world needs at least one class");
  std::vector<double> weight_sum(classes_.size(), 0.0);
  for (const auto& c : components_) {
    if (static_cast<int>(c.mean.size()) != dimension_) throw_invalid("component mean has the wrong dimension");
    if (!(c.variance > 0.0)) throw_invalid("component variance must be positive");
    if (!(c.weight > 0.0)) throw_invalid("component weight must be positive");
    if (c.class_index < 0 || c.class_index >= static_cast<int>(classes_.size())) {
      throw_invalid("component refers to an unknown class");
    }
    weight_sum[static_cast<std::size_t>(c.class_index)] += c.weight;
  }
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    if (std::abs(weight_sum[k] - 1.0) > 1e-9) {
      throw_invalid("component weights of class '" + classes_[k] + "' must sum to 1");
    }
  }
}

std::vector<double> MixtureWorld::class_mean(int class_index) const {
  std::vector<double> mean(static_cast<std::size_t>(dimension_), 0.0);
  for (const auto& c : components_) {
    if (c.class_index != class_index) continue;
    for (int d = 0; d < dimension_; ++d) mean[d] += c.weight * c.mean[d];
  }
  return mean;
}

int MixtureWorld::class_of(const Prompt& prompt) const {
  if (prompt.is_null()) return -1;
  int found = -1;
  for (auto id : prompt.tokens) {
    if (id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    if (id == Vocabulary::kNull || !vocab_.contains(id)) throw_invalid("prompt token is not a world class");
    if (found >= 0) throw_invalid("oracle prompts must name exactly one class");
    found = id - 3;
  }
  if (found < 0) throw_invalid("oracle prompt names no class");
  return found;
}

nlohmann::json MixtureWorld::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : components_) {
    comps.push_back({{"class", classes_[static_cast<std::size_t>(c.class_index)]},
                     {"mean", c.mean},
                     {"variance", c.variance},
                     {"weight", c.weight}});
  }
  return {{"dimension", dimension_}, {"classes", classes_}, {"components", comps}};
}

MixtureWorld MixtureWorld::from_json(const nlohmann::json& doc) {
  try {
    const int dim = doc.at("dimension").get<int>();
    auto classes = doc.at("classes").get<std::vector<std::string>>();
    std::vector<MixtureComponent> comps;
    for (const auto& c : doc.at("components")) {
      const auto name = c.at("class").get<std::string>();
      const auto it = std::find(classes.begin(), classes.end(), name);
      if (it == classes.end()) throw_invalid("component class '" + name + "' is not declared");
      comps.push_back({c.at("mean").get<std::vector<double>>(), c.at("variance").get<double>(),
                       static_cast<int>(it - classes.begin()), c.value("weight", 1.0)});
    }
    return MixtureWorld(dim, std::move(classes), std::move(comps));
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("malformed world document: ") + e.what());
  }
}

std::vector<std::vector<double>> MixtureWorld::sample(int class_index, std::size_t count, Rng& rng) const {
  std::vector<double> probs;
  std::vector<const MixtureComponent*> pool;
  for (const auto& c : components_) {
    if (class_index >= 0 && c.class_index != class_index) continue;
    pool.push_back(&c);
    probs.push_back(class_index >= 0 ? c.weight : c.weight / static_cast<double>(classes_.size()));
  }
  if (pool.empty()) throw_invalid("no components for the requested class");
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out(count, std::vector<double>(static_cast<std::size_t>(dimension_)));
  for (auto& x : out) {
    const auto* c = pool[pick(rng)];
    const double sd = std::sqrt(c->variance);
    for (int d = 0; d < dimension_; ++d) x[d] = c->mean[d] + sd * normal(rng);
  }
  return out;
}

MixtureWorld two_class_world(int dimension, double offset, double variance) {
  std::vector<double> a(static_cast<std::size_t>(dimension), 0.0);
  std::vector<double> b(static_cast<std::size_t>(dimension), 0.0);
  a[0] = -offset;
  b[0] = offset;
  return MixtureWorld(dimension, {"a", "b"}, {{a, variance, 0, 1.0}, {b, variance, 1, 1.0}});
}

namespace {

struct Responsibilities {
  std::vector<const MixtureComponent*> comps;
  std::vector<double> weights;      // normalized posterior responsibilities
  std::vector<double> marg_var;     // alpha^2 v + sigma^2
  double log_norm = 0.0;            // log q_t(x)
};

Responsibilities responsibilities(const MixtureWorld& world, const NoiseSchedule& sched,
                                  std::span<const double> x, int t, const Prompt& prompt) {
  if (static_cast<int>(x.size()) != world.dimension()) throw_invalid("oracle: sample dimension mismatch");
  if (t < 0 || t > sched.steps()) throw_invalid("oracle: step out of range");
  const int cls = world.class_of(prompt);
  const double a = sched.alpha(t);
  const double s2 = sched.sigma2(t);
  const double n_classes = static_cast<double>(world.classes().size());
  const double d = static_cast<double>(world.dimension());
  Responsibilities r;
  std::vector<double> logp;
  for (const auto& c : world.components()) {
    if (cls >= 0 && c.class_index != cls) continue;
    const double var = a * a * c.variance + s2;
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double diff = x[i] - a * c.mean[i];
      sq += diff * diff;
    }
    const double prior = cls >= 0 ? c.weight : c.weight / n_classes;
    logp.push_back(std::log(prior) - 0.5 * d * std::log(2.0 * std::numbers::pi * var) - 0.5 * sq / var);
    r.comps.push_back(&c);
    r.marg_var.push_back(var);
  }
  const double peak = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double lp : logp) total += std::exp(lp - peak);
  r.log_norm = peak + std::log(total);
  r.weights.resize(logp.size());
  for (std::size_t i = 0; i < logp.size(); ++i) r.weights[i] = std::exp(logp[i] - r.log_norm);
  return r;
}

}  // namespace

std::vector<double> oracle_eps(const MixtureWorld& world, const NoiseSchedule& sched,
                               std::span<const double> x_t, int t, const Prompt& prompt) {
  const auto r = responsibilities(world, sched, x_t, t, prompt);
  const double a = sched.alpha(t);
  const double sigma = sched.sigma(t);
  std::vector<double> eps(x_t.size(), 0.0);
  for (std::size_t k = 0; k < r.comps.size(); ++k) {
    const double coef = r.weights[k] / r.marg_var[k];
    for (std::size_t i = 0; i < x_t.size(); ++i) eps[i] += coef * (x_t[i] - a * r.comps[k]->mean[i]);
  }
  for (auto& e : eps) e *= sigma;
  return eps;
}

std::vector<double> posterior_mean_x0(const MixtureWorld& world, const NoiseSchedule& sched,
                                      std::span<const double> x_t, int t, const Prompt& prompt) {
  const auto r = responsibilities(world, sched, x_t, t, prompt);
  const double a = sched.alpha(t);
  std::vector<double> mean(x_t.size(), 0.0);
  for (std::size_t k = 0; k < r.comps.size(); ++k) {
    const auto& c = *r.comps[k];
    const double gain = a * c.variance / r.marg_var[k];
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      mean[i] += r.weights[k] * (c.mean[i] + gain * (x_t[i] - a * c.mean[i]));
    }
  }
  return mean;
}

double log_marginal_density(const MixtureWorld& world, const NoiseSchedule& sched,
                            std::span<const double> x, int t, const Prompt& prompt) {
  return responsibilities(world, sched, x, t, prompt).log_norm;
}

MixtureWorld random_world(int dimension, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.5);
  std::uniform_real_distribution<double> var(0.1, 1.0);
  std::vector<MixtureComponent> comps;
  for (int cls = 0; cls < 2; ++cls) {
    for (int k = 0; k < 3; ++k) {
      std::vector<double> mean(static_cast<std::size_t>(dimension));
      for (auto& m : mean) m = normal(rng);
      comps.push_back({mean, var(rng), cls, k == 0 ? 0.5 : 0.25});
    }
  }
  return MixtureWorld(dimension, {"a", "b"}, comps);
}

nlohmann::json ScoreCheckReport::to_json() const {
  return {{"probes", probes}, {"coordinates", coordinates}, {"max_error", max_error}, {"step", step}};
}

ScoreCheckReport score_fd_check(const MixtureWorld& world, const NoiseSchedule& sched,
                                std::size_t probes, std::uint64_t seed, double step) {
  if (!(step > 0.0)) throw_invalid("finite-difference step must be positive");
  Rng rng = make_rng(seed, 3);
  std::uniform_int_distribution<int> pick_t(1, sched.steps());
  std::normal_distribution<double> normal(0.0, 2.0);
  const auto n_classes = world.classes().size();
  ScoreCheckReport report;
  report.step = step;
  const auto dim = static_cast<std::size_t>(world.dimension());
  std::vector<double> x(dim);
  for (std::size_t probe = 0; probe < probes; ++probe) {
    const int t = pick_t(rng);
    const std::size_t which = probe % (n_classes + 1);
    const Prompt p = which == 0 ? Prompt::null_prompt()
                                : Prompt{{Vocabulary::kBos, static_cast<TokenId>(Vocabulary::kNull + which), Vocabulary::kEos},
                                         {1.0, 1.0, 1.0}};
    for (auto& v : x) v = normal(rng);
    const auto eps = oracle_eps(world, sched, x, t, p);
    for (std::size_t i = 0; i < dim; ++i) {
      auto up = x, down = x;
      up[i] += step;
      down[i] -= step;
      const double grad = (log_marginal_density(world, sched, up, t, p) -
                           log_marginal_density(world, sched, down, t, p)) / (2.0 * step);
      const double fd = -sched.sigma(t) * grad;
      report.max_error = std::max(report.max_error, std::abs(fd - eps[i]) / std::max(1.0, std::abs(eps[i])));
      ++report.coordinates;
    }
    ++report.probes;
  }
  return report;
}

OracleDenoiser::OracleDenoiser(MixtureWorld world, NoiseSchedule sched)
    : world_(std::move(world)), schedule_(std::move(sched)) {}

SampleBatch OracleDenoiser::predict_eps(const SampleBatch& x_t, int t,
                                        std::span<const Prompt> prompts) const {
  check_predict_args(*this, x_t, t, prompts);
  SampleBatch out(x_t.shape(), x_t.count());
  for (std::size_t b = 0; b < x_t.count(); ++b) {
    const Prompt& p = prompts.size() == 1 ? prompts[0] : prompts[b];
    const auto eps = oracle_eps(world_, schedule_, x_t.sample(b), t, p);
    std::copy(eps.begin(), eps.end(), out.sample(b).begin());
  }
  return out;
}

}  // namespace semmix
