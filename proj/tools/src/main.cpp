// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "semmix/tools/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return semmix::tools::run_cli(args, std::cout, std::cerr);
}
