// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <mutex>

#include "masko/error.hpp"
#include "masko/log.hpp"

namespace masko {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kUnknownParameter: return "unknown_parameter";
    case ErrorCode::kMissingParameter: return "missing_parameter";
    case ErrorCode::kMissingGradient: return "missing_gradient";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kState: return "invalid_state";
  }
  return "unknown";
}

namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler() {
  static WarningHandler h = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(handler_mutex());
  WarningHandler old = std::move(handler());
  handler() = std::move(h);
  return old;
}

void warn(const std::string& message) {
  std::lock_guard lock(handler_mutex());
  if (handler()) handler()(message);
}

}  // namespace masko
