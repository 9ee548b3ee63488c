// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace masko {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kParse,
  kVersionMismatch,
  kUnknownParameter,
  kMissingParameter,
  kMissingGradient,
  kIo,
  kDivergence,
  kState,
};

const char* to_string(ErrorCode code);

// All recoverable failures in the library are reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace masko
