// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

namespace masko {

using WarningHandler = std::function<void(const std::string&)>;

// Installs a process-wide handler for non-fatal diagnostics and returns the
// previous one. The default handler prints to stderr.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(const std::string& message);

}  // namespace masko
