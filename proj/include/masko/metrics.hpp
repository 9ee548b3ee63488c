// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

namespace masko::metrics {

using Sequence = std::vector<std::string>;

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count
};

struct F1Result {
  double micro = 0.0;
  double macro = 0.0;
  std::map<std::string, ClassScore> per_class;
};

// Single-label classification. Classes of `labels` that occur in neither
// golds nor predictions are left out of the macro mean. An empty `labels`
// means the union of observed classes.
F1Result micro_macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& golds,
                        const std::vector<std::string>& labels = {});

// F1 of clipped n-gram overlap; 0 when either side has no n-grams.
double rouge_n(const Sequence& candidate, const Sequence& reference, std::size_t n);

std::size_t lcs_length(const Sequence& a, const Sequence& b);
double rouge_l(const Sequence& candidate, const Sequence& reference);

// Sentence BLEU-4, uniform weights, brevity penalty. A precision with zero
// matches is replaced by 1 / (count + 1).
double bleu4(const Sequence& candidate, const Sequence& reference);

}  // namespace masko::metrics
