// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/error.hpp"

namespace semmix {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidConfig: return "invalid_config";
    case ErrorCategory::kNotFound: return "not_found";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kCheckFailed: return "check_failed";
    case ErrorCategory::kCapacity: return "capacity";
    case ErrorCategory::kInternal: return "internal";
  }
  return "internal";
}

void throw_invalid(const std::string& message) {
  throw Error(ErrorCategory::kInvalidConfig, message);
}
void throw_not_found(const std::string& message) {
  throw Error(ErrorCategory::kNotFound, message);
}
void throw_io(const std::string& message) {
  throw Error(ErrorCategory::kIo, message);
}
void throw_numeric(const std::string& message) {
  throw Error(ErrorCategory::kNumeric, message);
}

}  // namespace semmix
