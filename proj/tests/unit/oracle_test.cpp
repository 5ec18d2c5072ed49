// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "semmix/error.hpp"
#include "semmix/oracle.hpp"
#include "test_util.hpp"

namespace semmix {
namespace {

using testing::default_schedule;

TEST(Oracle, SingleGaussianClosedForm) {
  const auto sched = default_schedule();
  const MixtureWorld w(2, {"a"}, {{{1.0, -2.0}, 0.3, 0, 1.0}});
  const Prompt p = parse_prompt("a", w.vocabulary());
  const std::vector<double> x{0.4, 0.7};
  for (int t : {1, 100, 500, 1000}) {
    const double a = sched.alpha(t), s2 = sched.sigma2(t);
    const auto eps = oracle_eps(w, sched, x, t, p);
    const double denom = a * a * 0.3 + s2;
    EXPECT_NEAR(eps[0], std::sqrt(s2) * (x[0] - a * 1.0) / denom, 1e-14);
    EXPECT_NEAR(eps[1], std::sqrt(s2) * (x[1] + a * 2.0) / denom, 1e-14);
  }
}

TEST(Oracle, SymmetricMixtureHasZeroScoreAtOrigin) {
  const auto sched = default_schedule();
  const MixtureWorld w(2, {"a"}, {{{1.5, 0.5}, 0.2, 0, 0.5}, {{-1.5, -0.5}, 0.2, 0, 0.5}});
  const auto eps = oracle_eps(w, sched, std::vector<double>{0.0, 0.0}, 300, parse_prompt("a", w.vocabulary()));
  EXPECT_NEAR(eps[0], 0.0, 1e-15);
  EXPECT_NEAR(eps[1], 0.0, 1e-15);
}

TEST(Oracle, ScoreMatchesFiniteDifferences) {
  const auto sched = default_schedule();
  Rng rng = make_rng(11);
  for (int dim : {2, 8}) {
    const MixtureWorld w = random_world(dim, rng);
    std::uniform_int_distribution<int> pick_t(1, 1000);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int probe = 0; probe < 50; ++probe) {
      const int t = pick_t(rng);
      const Prompt p = probe % 3 == 0 ? Prompt::null_prompt() : parse_prompt(probe % 3 == 1 ? "a" : "b", w.vocabulary());
      std::vector<double> x(static_cast<std::size_t>(dim));
      for (auto& v : x) v = normal(rng);
      const auto eps = oracle_eps(w, sched, x, t, p);
      const double h = 1e-5;
      for (int i = 0; i < dim; ++i) {
        auto up = x, down = x;
        up[i] += h;
        down[i] -= h;
        const double grad = (log_marginal_density(w, sched, up, t, p) - log_marginal_density(w, sched, down, t, p)) / (2 * h);
        const double fd_eps = -sched.sigma(t) * grad;
        EXPECT_LE(std::abs(fd_eps - eps[i]), 1e-5 * std::max(1.0, std::abs(eps[i])))
            << "dim " << dim << " t " << t << " i " << i;
      }
    }
  }
}

TEST(Oracle, ScoreCheckReportCoversAllCoordinates) {
  Rng rng = make_rng(2);
  const auto r = score_fd_check(random_world(3, rng), default_schedule(), 30, 9);
  EXPECT_EQ(r.probes, 30u);
  EXPECT_EQ(r.coordinates, 90u);
  EXPECT_LE(r.max_error, 1e-5);
  EXPECT_THROW(score_fd_check(random_world(3, rng), default_schedule(), 1, 9, 0.0), Error);
}

TEST(Oracle, DensityIsNormalizedIn2d) {
  const auto sched = default_schedule();
  Rng rng = make_rng(4);
  const MixtureWorld w = random_world(2, rng);
  const Prompt p = parse_prompt("a", w.vocabulary());
  const double step = 0.05;
  double mass = 0.0;
  for (double x = -12; x <= 12; x += step) {
    for (double y = -12; y <= 12; y += step) {
      mass += std::exp(log_marginal_density(w, sched, std::vector<double>{x, y}, 400, p));
    }
  }
  EXPECT_NEAR(mass * step * step, 1.0, 1e-6);
}

TEST(Oracle, PosteriorMeanLimitsAndSingleComponentIdentity) {
  const auto sched = default_schedule();
  const MixtureWorld single(2, {"a"}, {{{0.5, 1.0}, 0.4, 0, 1.0}});
  const Prompt p = parse_prompt("a", single.vocabulary());
  const std::vector<double> x{2.0, -1.0};
  EXPECT_EQ(posterior_mean_x0(single, sched, x, 0, p), x);
  const auto at_one = posterior_mean_x0(single, sched, x, 1, p);
  EXPECT_NEAR(at_one[0], x[0], 1e-3);
  for (int t : {1, 250, 750, 1000}) {
    const auto eps = oracle_eps(single, sched, x, t, p);
    const auto m = posterior_mean_x0(single, sched, x, t, p);
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(m[i], (x[i] - sched.sigma(t) * eps[i]) / sched.alpha(t), 1e-10);
    }
  }
  // t = T: shrinkage mu + a v / (a^2 v + s^2) (x - a mu)
  const double a = sched.alpha(1000), s2 = sched.sigma2(1000);
  const auto m = posterior_mean_x0(single, sched, x, 1000, p);
  EXPECT_NEAR(m[0], 0.5 + a * 0.4 / (a * a * 0.4 + s2) * (x[0] - a * 0.5), 1e-14);
}

// E[x0 | x_t] by brute-force integration over x0 on a grid.
std::vector<double> quadrature_posterior_mean(const MixtureWorld& w, const NoiseSchedule& sched,
                                              const std::vector<double>& xt, int t, int cls) {
  const double a = sched.alpha(t), s2 = sched.sigma2(t);
  double z = 0.0, m0 = 0.0, m1 = 0.0;
  const double step = 0.01;
  for (double u = -9; u <= 9; u += step) {
    for (double v = -9; v <= 9; v += step) {
      double prior = 0.0;
      for (const auto& c : w.components()) {
        if (c.class_index != cls) continue;
        const double d2 = (u - c.mean[0]) * (u - c.mean[0]) + (v - c.mean[1]) * (v - c.mean[1]);
        prior += c.weight * std::exp(-0.5 * d2 / c.variance) / (2 * std::numbers::pi * c.variance);
      }
      const double l2 = (xt[0] - a * u) * (xt[0] - a * u) + (xt[1] - a * v) * (xt[1] - a * v);
      const double wgt = prior * std::exp(-0.5 * l2 / s2);
      z += wgt;
      m0 += wgt * u;
      m1 += wgt * v;
    }
  }
  return {m0 / z, m1 / z};
}

TEST(Oracle, PosteriorMeanMatchesQuadratureIn2d) {
  const auto sched = default_schedule();
  Rng rng = make_rng(21);
  const MixtureWorld w = random_world(2, rng);
  const Prompt p = parse_prompt("b", w.vocabulary());
  for (const auto& [t, xt] : std::vector<std::pair<int, std::vector<double>>>{
           {300, {0.5, -0.3}}, {600, {1.2, 0.8}}, {900, {-0.4, 0.2}}}) {
    const auto m = posterior_mean_x0(w, sched, xt, t, p);
    const auto q = quadrature_posterior_mean(w, sched, xt, t, 1);
    EXPECT_NEAR(m[0], q[0], 1e-4);
    EXPECT_NEAR(m[1], q[1], 1e-4);
  }
}

TEST(Oracle, PosteriorErrorShrinksAsNoiseDecreases) {
  const auto sched = default_schedule();
  Rng rng = make_rng(5);
  const MixtureWorld w = random_world(2, rng);
  const Prompt p = parse_prompt("a", w.vocabulary());
  const auto x0s = w.sample(0, 10000, rng);
  std::vector<std::vector<double>> eps(x0s.size(), std::vector<double>(2));
  for (auto& e : eps) fill_normal(e, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (int t = 1000; t >= 0; t -= 100) {
    double err = 0.0;
    for (std::size_t i = 0; i < x0s.size(); ++i) {
      const auto xt = forward_diffuse(sched, x0s[i], t, eps[i]);
      const auto m = posterior_mean_x0(w, sched, xt, t, p);
      err += (m[0] - x0s[i][0]) * (m[0] - x0s[i][0]) + (m[1] - x0s[i][1]) * (m[1] - x0s[i][1]);
    }
    err /= static_cast<double>(x0s.size());
    EXPECT_LE(err, prev) << "t=" << t;
    prev = err;
  }
  EXPECT_NEAR(prev, 0.0, 1e-20);
}

TEST(Oracle, RejectsUnknownOrAmbiguousPrompts) {
  const auto sched = default_schedule();
  const MixtureWorld w = two_class_world(2);
  const std::vector<double> x{0.0, 0.0};
  EXPECT_THROW(oracle_eps(w, sched, x, 10, Prompt{{0, 9, 1}, {1, 1, 1}}), Error);
  EXPECT_THROW(oracle_eps(w, sched, x, 10, parse_prompt("a b", w.vocabulary())), Error);
  EXPECT_THROW(oracle_eps(w, sched, std::vector<double>{0.0}, 10, parse_prompt("a", w.vocabulary())), Error);
}

TEST(Oracle, WorldDocumentRoundTripAndValidation) {
  const MixtureWorld w = two_class_world(3, 1.5, 0.2);
  const MixtureWorld back = MixtureWorld::from_json(w.to_json());
  EXPECT_EQ(back.to_json(), w.to_json());
  auto doc = w.to_json();
  doc["components"][0]["weight"] = 0.5;
  EXPECT_THROW(MixtureWorld::from_json(doc), Error);
  doc = w.to_json();
  doc["components"][0]["variance"] = 0.0;
  EXPECT_THROW(MixtureWorld::from_json(doc), Error);
  doc = w.to_json();
  doc["components"][0]["class"] = "zzz";
  EXPECT_THROW(MixtureWorld::from_json(doc), Error);
  EXPECT_THROW(MixtureWorld::from_json(nlohmann::json::parse(R"({"dimension": 2})")), Error);
}

TEST(Oracle, DenoiserMatchesFreeFunction) {
  const auto sched = default_schedule();
  const OracleDenoiser model(two_class_world(2), sched);
  SampleBatch x(SampleShape::flat(2), 2, {0.3, -0.1, 1.0, 2.0});
  const Prompt p = parse_prompt("b", model.vocabulary());
  const SampleBatch eps = model.predict_eps(x, 250, p);
  const auto ref = oracle_eps(model.world(), sched, x.sample(1), 250, p);
  EXPECT_EQ(eps.sample(1)[0], ref[0]);
  EXPECT_EQ(eps.sample(1)[1], ref[1]);
  EXPECT_THROW(model.predict_eps(x, 0, p), Error);
}

}  // namespace
}  // namespace semmix
