// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace semmix {

/// Coarse failure classes. The CLI maps each one to its own exit code and
/// the service maps them to HTTP statuses.
enum class ErrorCategory {
  kInvalidConfig,
  kNotFound,
  kIo,
  kNumeric,
  kCheckFailed,
  kCapacity,
  kInternal,
};

std::string_view category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] void throw_invalid(const std::string& message);
[[noreturn]] void throw_not_found(const std::string& message);
[[noreturn]] void throw_io(const std::string& message);
[[noreturn]] void throw_numeric(const std::string& message);

}  // namespace semmix
