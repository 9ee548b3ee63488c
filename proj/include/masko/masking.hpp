// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"
#include "masko/corpus.hpp"
#include "masko/rng.hpp"

namespace masko::masking {

using corpus::RoleId;
using corpus::TokenId;

struct MaskingConfig {
  double word_mask_rate = 0.15;
  double role_mask_rate = 0.15;
  bool use_knowledge = true;
  std::uint64_t seed = 1;
};

// max(1, round(rate * n)) with halves rounded up; 0 when n == 0.
std::size_t mask_count(std::size_t n, double rate);

// Distinct positions in [0, l), ascending, uniform without replacement.
std::vector<std::size_t> select_word_masks(std::size_t l, double rate, Rng& rng);
std::vector<std::size_t> select_role_masks(std::size_t L, double rate, Rng& rng);
std::size_t select_generation_sentence(std::size_t L, Rng& rng);

struct WordTarget {
  std::size_t utterance;
  std::size_t position;
  TokenId target;
  bool operator==(const WordTarget&) const = default;
};

struct RoleTarget {
  std::size_t utterance;
  RoleId target;
  bool operator==(const RoleTarget&) const = default;
};

struct PretrainInstance {
  std::string dialogue_id;
  std::vector<std::vector<TokenId>> tokens;  // model input after masking
  std::vector<RoleId> roles;                 // model input after masking
  std::vector<WordTarget> word_masks;        // Z
  std::vector<RoleTarget> role_masks;        // G
  std::size_t generation_index = 0;          // m
  std::vector<TokenId> generation_target;    // [BOS] S_m [EOS]
  std::optional<std::vector<int>> reference_labels;

  nlohmann::json to_json() const;
};

// Token and role ids of an unmasked dialogue.
struct EncodedDialogue {
  std::vector<std::vector<TokenId>> tokens;
  std::vector<RoleId> roles;
};
EncodedDialogue encode_dialogue(const corpus::Dialogue& d, const corpus::Vocabulary& vocab,
                                const corpus::RoleSet& roles);

// Replaces every exact match of a catalog name with one [MASK_REF]. At each
// position the longest matching name wins.
std::vector<TokenId> substitute_references(const std::vector<TokenId>& tokens,
                                           const std::vector<std::vector<TokenId>>& names);

// Reference label bits over the catalog. Throws when a cited name is not in
// the catalog.
std::vector<int> reference_labels(const corpus::Dialogue& d, const corpus::ReferenceCatalog& catalog);

// Realizes all four maskings. The rng stream is derived from
// (cfg.seed, epoch, dialogue id). `catalog` is ignored when knowledge is off.
// Neither Z nor G touches the generation sentence unless it is the only one.
PretrainInstance build_pretraining_instance(const corpus::Dialogue& d, const corpus::ReferenceCatalog* catalog,
                                            const corpus::Vocabulary& vocab, const corpus::RoleSet& roles,
                                            const MaskingConfig& cfg, std::uint64_t epoch = 0);

void dump_instances(const std::filesystem::path& path, const std::vector<PretrainInstance>& instances);

}  // namespace masko::masking
