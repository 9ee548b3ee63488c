// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"
#include "masko/corpus.hpp"

namespace masko::corpus {

// Planted-structure generator. Tokens are split into one shared block and
// one block per role; each block is split into a noise group and one group
// per topic. An utterance is a run of fixed 3-token phrases. Each phrase
// comes from the speaker's block with probability `skew`, otherwise from
// the shared block.
struct SyntheticConfig {
  std::size_t dialogues = 100;
  std::size_t min_utterances = 4;
  std::size_t max_utterances = 10;
  std::size_t min_tokens = 6;
  std::size_t max_tokens = 15;
  std::size_t vocab_size = 200;
  std::size_t roles = 4;
  double skew = 0.9;
  std::size_t topics = 4;
  double topic_rate = 0.6;         // chance an utterance in a segment is on-topic
  std::size_t phrases_per_group = 4;
  std::size_t references = 0;      // 0 disables the catalog
  double citation_rate = 0.7;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticConfig from_json(const nlohmann::json& j);
};

struct SyntheticCorpus {
  std::vector<Dialogue> dialogues;
  std::optional<ReferenceCatalog> catalog;
};

// Pure function of the config.
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg, std::size_t t_max = 512);

std::string synthetic_role_name(std::size_t role);
std::string synthetic_topic_label(std::size_t topic);
inline constexpr const char* kNoiseLabel = "noise";

}  // namespace masko::corpus
