// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/optim.hpp"

#include <cmath>

#include "masko/error.hpp"

namespace masko {

void Adam::init(const ParameterStore& params) {
  moments_.clear();
  t_ = 0;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    moments_.emplace(name, AdamMoments{Tensor(p.value.shape()), Tensor(p.value.shape())});
  }
}

void Adam::step(ParameterStore& params) {
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    auto it = moments_.find(name);
    if (it == moments_.end()) fail(ErrorCode::kMissingGradient, "no optimizer state for " + name);
    if (p.grad.shape() != p.value.shape()) fail(ErrorCode::kMissingGradient, "no gradient for " + name);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    AdamMoments& mo = moments_.at(name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      mo.m[i] = hyper_.beta1 * mo.m[i] + (1.0 - hyper_.beta1) * g;
      mo.v[i] = hyper_.beta2 * mo.v[i] + (1.0 - hyper_.beta2) * g * g;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      p.value[i] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
    }
  }
}

}  // namespace masko
