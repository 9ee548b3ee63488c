// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

#include "masko/autograd.hpp"

namespace masko {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  // Diagnostics for coordinates whose true gradient sits near the resolution
  // of a 64-bit difference quotient, roughly ulp(f) / 2e.
  double max_rel_error_resolved = 0.0;  // over coordinates with max(|a|, |n|) >= kResolvedFloor
  double max_abs_error_unresolved = 0.0;  // over the remaining coordinates
  std::size_t over_1e4 = 0;             // coordinates with relative error above 1e-4
};

inline constexpr double kResolvedFloor = 1e-5;

using LossFn = std::function<Var(Tape&)>;

// Compares analytic gradients of every trainable parameter in `params` with
// central differences (f(x+e) - f(x-e)) / 2e. Relative error per coordinate
// is |a - n| / max(|a|, |n|, 1e-8). Throws kDivergence on a non-finite loss.
GradCheckResult grad_check(const LossFn& loss_fn, ParameterStore& params, double epsilon = 1e-5);

}  // namespace masko
