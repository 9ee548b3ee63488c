// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "masko/autograd.hpp"

namespace masko {

// Which pretraining tasks contribute to the loss.
struct ObjectiveSet {
  bool word = true;       // W.P.
  bool role = true;       // R.P.
  bool sentence = true;   // S.G.
  bool reference = true;  // F.P.

  // Comma-separated letters from {w, r, s, f}.
  static ObjectiveSet parse(const std::string& text);
  std::string to_string() const;
  bool any() const { return word || role || sentence || reference; }
  bool operator==(const ObjectiveSet&) const = default;
};

struct RunConfig {
  // Encoder.
  std::size_t word_emb_dim = 300;
  std::size_t role_emb_dim = 100;
  std::size_t hidden_dim = 256;
  std::size_t transformer_layers = 2;
  std::size_t ff_dim = 1024;
  std::size_t heads = 4;
  bool use_knowledge = true;
  std::size_t t_max = 256;

  // Optimizer.
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Masking.
  double word_mask_rate = 0.15;
  double role_mask_rate = 0.15;

  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t max_utterances = 64;
  std::size_t max_tokens = 50;

  // Knobs with faithful defaults.
  std::string objectives = "w,r,s,f";
  std::string activation = "tanh";
  double dropout = 0.0;
  std::size_t grad_accumulation = 1;
  bool normalize_losses = false;
  double weight_word = 1.0;
  double weight_role = 1.0;
  double weight_sentence = 1.0;
  double weight_reference = 1.0;
  std::size_t min_count = 1;
  std::size_t max_decode_len = 32;

  void validate() const;
  ops::Activation activation_fn() const;
  ObjectiveSet objective_set() const { return ObjectiveSet::parse(objectives); }

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are an error.
  static RunConfig from_json(const nlohmann::json& j);
  // Applies the keys of `overrides` on top of this config.
  RunConfig merged(const nlohmann::json& overrides) const;
};

}  // namespace masko
