// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace htc {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCategory {
  Input,         // bad arguments, malformed files, unknown labels -> exit 2
  Numeric,       // non-finite loss/gradient, degenerate vectors   -> exit 3
  Incompatible,  // checkpoint/dataset mismatch                    -> exit 4
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what),
        category_(cat),
        kind_(std::move(kind)) {}

  ErrorCategory category() const { return category_; }
  const std::string& kind() const { return kind_; }

 private:
  ErrorCategory category_;
  std::string kind_;
};

inline Error input_error(const std::string& kind, const std::string& what) {
  return Error(ErrorCategory::Input, kind, what);
}
inline Error numeric_error(const std::string& kind, const std::string& what) {
  return Error(ErrorCategory::Numeric, kind, what);
}
inline Error incompatible_error(const std::string& kind,
                                const std::string& what) {
  return Error(ErrorCategory::Incompatible, kind, what);
}

}  // namespace htc
