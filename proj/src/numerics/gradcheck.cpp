// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "masko/error.hpp"

namespace masko {
namespace {

double evaluate(const LossFn& loss_fn) {
  Tape tape;
  const double v = loss_fn(tape).scalar();
  if (!std::isfinite(v)) fail(ErrorCode::kDivergence, "grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossFn& loss_fn, ParameterStore& params, double epsilon) {
  params.zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    if (!std::isfinite(loss.scalar())) fail(ErrorCode::kDivergence, "grad_check: non-finite loss");
    tape.backward(loss);
  }
  GradCheckResult result;
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    const Tensor analytic = p.grad;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + epsilon;
      const double up = evaluate(loss_fn);
      p.value[i] = saved - epsilon;
      const double down = evaluate(loss_fn);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (std::max(std::abs(a), std::abs(numeric)) >= kResolvedFloor)
        result.max_rel_error_resolved = std::max(result.max_rel_error_resolved, rel);
      else
        result.max_abs_error_unresolved = std::max(result.max_abs_error_unresolved, std::abs(a - numeric));
      if (rel > 1e-4) ++result.over_1e4;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_parameter = name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace masko
