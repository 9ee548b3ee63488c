// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace masko::corpus {

using TokenId = std::size_t;
using RoleId = std::size_t;

struct Utterance {
  std::string role;
  std::vector<std::string> tokens;
  std::optional<std::string> label;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;
  std::vector<std::string> references;
  std::optional<std::vector<std::string>> summary;

  bool fully_labeled() const;
};

// JSON-Lines record <-> Dialogue. `line` is used only in error messages.
Dialogue parse_dialogue(const nlohmann::json& j, std::size_t line);
nlohmann::json to_json(const Dialogue& d);

class RoleSet;

// Reads one dialogue per non-empty line. Errors name the line and field.
// When `known_roles` is given, roles outside it are rejected.
std::vector<Dialogue> load_dialogues(const std::filesystem::path& path,
                                     const RoleSet* known_roles = nullptr);
void write_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues);

// Truncates to the utterance/token caps, warning once per affected dialogue.
// Returns the number of dialogues changed.
std::size_t apply_caps(std::vector<Dialogue>& dialogues, std::size_t max_utterances,
                       std::size_t max_tokens);

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kMask = 2;
inline constexpr TokenId kBos = 3;
inline constexpr TokenId kEos = 4;
inline constexpr TokenId kMaskRef = 5;
inline constexpr std::size_t kReservedTokens = 6;

inline constexpr RoleId kPadRole = 0;
inline constexpr RoleId kMaskRole = 1;
inline constexpr std::size_t kReservedRoles = 2;
}  // namespace special

class ReferenceCatalog;

class Vocabulary {
 public:
  Vocabulary();

  // Frequency-ordered ids (ties lexicographic) after the reserved block.
  static Vocabulary build(const std::vector<Dialogue>& dialogues, std::size_t min_count = 1,
                          const ReferenceCatalog* catalog = nullptr);
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  TokenId id(const std::string& token) const;  // [UNK] when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t count(TokenId id) const { return counts_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
};

class RoleSet {
 public:
  RoleSet();
  static RoleSet build(const std::vector<Dialogue>& dialogues);
  static RoleSet from_names(const std::vector<std::string>& names);

  bool contains(const std::string& role) const { return index_.count(role) != 0; }
  RoleId id(const std::string& role) const;  // throws on unknown roles
  const std::string& name(RoleId id) const { return names_.at(id); }
  std::size_t size() const noexcept { return names_.size(); }
  // Number of predictable roles, excluding the reserved entries.
  std::size_t class_count() const noexcept { return names_.size() - special::kReservedRoles; }
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, RoleId> index_;
};

struct ReferenceEntry {
  std::string name;
  std::vector<std::string> content;
};

class ReferenceCatalog {
 public:
  ReferenceCatalog() = default;
  // Errors on duplicate names; concatenated content is cut to t_max with a
  // warning.
  ReferenceCatalog(std::vector<ReferenceEntry> entries, std::size_t t_max);

  const std::vector<ReferenceEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  // Position of `name` in catalog order, or nullopt.
  std::optional<std::size_t> index(const std::string& name) const;
  // The name split on whitespace, as matched against utterance tokens.
  std::vector<std::string> name_tokens(std::size_t entry) const;
  // Concatenated content C, length t <= t_max.
  const std::vector<std::string>& content() const noexcept { return content_; }
  std::size_t t_max() const noexcept { return t_max_; }

  nlohmann::json to_json() const;
  static ReferenceCatalog from_json(const nlohmann::json& j, std::size_t t_max);

 private:
  std::vector<ReferenceEntry> entries_;
  std::vector<std::string> content_;
  std::size_t t_max_ = 0;
};

ReferenceCatalog load_reference_catalog(const std::filesystem::path& path, std::size_t t_max);
void write_reference_catalog(const std::filesystem::path& path, const ReferenceCatalog& catalog);

struct Stats {
  std::size_t dialogues = 0;
  std::size_t utterances = 0;
  std::size_t tokens = 0;
  double mean_length = 0.0;            // utterances per dialogue
  double mean_utterance_tokens = 0.0;
  std::map<std::string, double> role_histogram;   // fractions of utterances
  std::map<std::string, double> label_histogram;  // fractions of labeled utterances
  std::size_t labeled_utterances = 0;
  std::size_t dialogues_with_summary = 0;
  std::size_t dialogues_with_references = 0;

  nlohmann::json to_json() const;
};

Stats corpus_stats(const std::vector<Dialogue>& dialogues);

// Deterministic 80/10/10 train/validation/test assignment by id hash.
enum class Split { kTrain, kValidation, kTest };
Split split_of(const std::string& dialogue_id);
std::vector<Dialogue> select_split(const std::vector<Dialogue>& dialogues, Split split);

}  // namespace masko::corpus
