// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "masko/error.hpp"

namespace masko::metrics {
namespace {

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::map<Sequence, std::size_t> ngrams(const Sequence& s, std::size_t n) {
  std::map<Sequence, std::size_t> out;
  if (n == 0 || s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Sequence(s.begin() + i, s.begin() + i + n)];
  return out;
}

// Clipped match count and the candidate's n-gram total.
std::pair<std::size_t, std::size_t> overlap(const Sequence& cand, const Sequence& ref, std::size_t n) {
  auto c = ngrams(cand, n), r = ngrams(ref, n);
  std::size_t match = 0, total = 0;
  for (const auto& [g, k] : c) {
    total += k;
    auto it = r.find(g);
    if (it != r.end()) match += std::min(k, it->second);
  }
  return {match, total};
}

}  // namespace

F1Result micro_macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& golds,
                        const std::vector<std::string>& labels) {
  if (predictions.size() != golds.size()) fail(ErrorCode::kShapeMismatch, "f1: prediction and gold counts differ");
  if (golds.empty()) fail(ErrorCode::kInvalidArgument, "f1: empty input");
  std::set<std::string> domain(labels.begin(), labels.end());
  std::set<std::string> seen(golds.begin(), golds.end());
  seen.insert(predictions.begin(), predictions.end());
  if (domain.empty()) domain = seen;

  std::map<std::string, std::size_t> tp, fp, fn;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions[i] == golds[i]) {
      ++tp[golds[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[golds[i]];
    }
  }
  F1Result res;
  std::size_t TP = 0, FP = 0, FN = 0;
  double macro_sum = 0.0;
  std::size_t macro_n = 0;
  for (const auto& c : domain) {
    const double t = static_cast<double>(tp[c]), p = static_cast<double>(fp[c]), n = static_cast<double>(fn[c]);
    TP += tp[c];
    FP += fp[c];
    FN += fn[c];
    ClassScore s;
    s.precision = t + p > 0 ? t / (t + p) : 0.0;
    s.recall = t + n > 0 ? t / (t + n) : 0.0;
    s.f1 = f1_of(s.precision, s.recall);
    s.support = tp[c] + fn[c];
    if (seen.count(c)) {
      macro_sum += s.f1;
      ++macro_n;
    }
    res.per_class[c] = s;
  }
  const double P = TP + FP > 0 ? static_cast<double>(TP) / static_cast<double>(TP + FP) : 0.0;
  const double R = TP + FN > 0 ? static_cast<double>(TP) / static_cast<double>(TP + FN) : 0.0;
  res.micro = f1_of(P, R);
  res.macro = macro_n > 0 ? macro_sum / static_cast<double>(macro_n) : 0.0;
  return res;
}

double rouge_n(const Sequence& candidate, const Sequence& reference, std::size_t n) {
  if (n == 0) fail(ErrorCode::kInvalidArgument, "rouge_n: n must be at least 1");
  auto [match, cand_total] = overlap(candidate, reference, n);
  const std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  if (cand_total == 0 || ref_total == 0) return 0.0;
  return f1_of(static_cast<double>(match) / static_cast<double>(cand_total),
               static_cast<double>(match) / static_cast<double>(ref_total));
}

std::size_t lcs_length(const Sequence& a, const Sequence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Sequence& candidate, const Sequence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  return f1_of(lcs / static_cast<double>(candidate.size()), lcs / static_cast<double>(reference.size()));
}

double bleu4(const Sequence& candidate, const Sequence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto [match, total] = overlap(candidate, reference, n);
    const double p = match > 0 ? static_cast<double>(match) / static_cast<double>(total)
                               : 1.0 / (static_cast<double>(total) + 1.0);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size()), r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

}  // namespace masko::metrics
