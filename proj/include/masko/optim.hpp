// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "masko/tensor.hpp"

namespace masko {

struct AdamHyper {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

// Bias-corrected Adam. One moment pair per trainable parameter, one shared
// step counter.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamHyper hyper) : hyper_(hyper) {}

  // Creates zero moments for every trainable parameter of `params`.
  void init(const ParameterStore& params);

  // Applies one update using each parameter's grad slot. Throws
  // kMissingGradient if a trainable parameter has no state or no gradient.
  void step(ParameterStore& params);

  const AdamHyper& hyper() const noexcept { return hyper_; }
  AdamHyper& hyper() noexcept { return hyper_; }
  std::uint64_t t() const noexcept { return t_; }
  void set_t(std::uint64_t t) noexcept { t_ = t; }

  const std::map<std::string, AdamMoments>& moments() const noexcept { return moments_; }
  std::map<std::string, AdamMoments>& moments() noexcept { return moments_; }

 private:
  AdamHyper hyper_;
  std::uint64_t t_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

}  // namespace masko
