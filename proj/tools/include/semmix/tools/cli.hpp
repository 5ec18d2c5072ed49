// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "semmix/error.hpp"

namespace semmix::tools {

/// Process exit codes, one per failure class.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitInvalidConfig = 3,
  kExitNotFound = 4,
  kExitIo = 5,
  kExitNumeric = 6,
  kExitCheckFailed = 7,
  kExitCapacity = 8,
};

int exit_code_for(ErrorCategory category);

/// Parses `args` (without the program name) and runs the command. Results go
/// to `out` as JSON; failures go to `err` as {"error": {...}}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace semmix::tools
