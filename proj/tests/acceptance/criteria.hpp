// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace semmix::acceptance {

struct Context {
  std::optional<std::filesystem::path> model;  // reference checkpoint
  std::optional<std::filesystem::path> data;   // reference dataset directory
  std::filesystem::path work;                  // scratch space
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds = 0.0;  // 0 means no runtime bound
  bool needs_reference = false;
  std::function<Outcome(const Context&)> run;
};

std::vector<Criterion> core_criteria();
std::vector<Criterion> shapes_criteria();
std::vector<Criterion> cli_criteria();

/// printf-style formatting for detail strings.
std::string format(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

/// One-sided sign test: P(X >= successes) for X ~ Binomial(trials, 1/2).
double sign_test_p(int successes, int trials);

}  // namespace semmix::acceptance
