// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "masko/error.hpp"
#include "masko/log.hpp"
#include "masko/rng.hpp"

namespace masko::corpus {
namespace {

using nlohmann::json;

[[noreturn]] void field_error(std::size_t line, const std::string& what) {
  fail(ErrorCode::kParse, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> string_list(const json& j, std::size_t line, const std::string& field) {
  if (!j.is_array()) field_error(line, "field \"" + field + "\" must be an array of strings");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_string()) field_error(line, "field \"" + field + "\" must contain only strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      field_error(line_no, std::string("invalid JSON (") + e.what() + ")");
    }
    f(j, line_no);
  }
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

bool Dialogue::fully_labeled() const {
  return std::all_of(utterances.begin(), utterances.end(),
                     [](const Utterance& u) { return u.label.has_value(); });
}

Dialogue parse_dialogue(const json& j, std::size_t line) {
  if (!j.is_object()) field_error(line, "dialogue must be a JSON object");
  Dialogue d;
  if (!j.contains("id") || !j["id"].is_string()) field_error(line, "missing string field \"id\"");
  d.id = j["id"].get<std::string>();
  if (!j.contains("utterances") || !j["utterances"].is_array()) {
    field_error(line, "missing array field \"utterances\"");
  }
  if (j["utterances"].empty()) field_error(line, "dialogue " + d.id + " has no utterances");
  std::size_t k = 0;
  for (const auto& u : j["utterances"]) {
    const std::string where = "utterance " + std::to_string(k);
    if (!u.is_object()) field_error(line, where + " must be an object");
    if (!u.contains("role") || !u["role"].is_string()) field_error(line, where + " missing field \"role\"");
    if (!u.contains("tokens")) field_error(line, where + " missing field \"tokens\"");
    Utterance utt;
    utt.role = u["role"].get<std::string>();
    if (utt.role.empty()) field_error(line, where + " has an empty \"role\"");
    utt.tokens = string_list(u["tokens"], line, "tokens");
    if (utt.tokens.empty()) field_error(line, where + " has no tokens");
    for (const auto& t : utt.tokens) {
      if (t.empty()) field_error(line, where + " contains an empty token");
    }
    if (u.contains("label") && !u["label"].is_null()) {
      if (!u["label"].is_string()) field_error(line, where + " field \"label\" must be a string");
      utt.label = u["label"].get<std::string>();
    }
    d.utterances.push_back(std::move(utt));
    ++k;
  }
  if (j.contains("references") && !j["references"].is_null()) {
    d.references = string_list(j["references"], line, "references");
  }
  if (j.contains("summary") && !j["summary"].is_null()) {
    d.summary = string_list(j["summary"], line, "summary");
  }
  return d;
}

json to_json(const Dialogue& d) {
  json j;
  j["id"] = d.id;
  j["utterances"] = json::array();
  for (const auto& u : d.utterances) {
    json ju = {{"role", u.role}, {"tokens", u.tokens}};
    if (u.label) ju["label"] = *u.label;
    j["utterances"].push_back(std::move(ju));
  }
  if (!d.references.empty()) j["references"] = d.references;
  if (d.summary) j["summary"] = *d.summary;
  return j;
}

std::vector<Dialogue> load_dialogues(const std::filesystem::path& path, const RoleSet* known_roles) {
  std::vector<Dialogue> out;
  for_each_line(path, [&](const json& j, std::size_t line) {
    Dialogue d = parse_dialogue(j, line);
    if (known_roles) {
      for (const auto& u : d.utterances) {
        if (!known_roles->contains(u.role) || known_roles->id(u.role) < special::kReservedRoles) {
          field_error(line, "unknown role \"" + u.role + "\"");
        }
      }
    }
    out.push_back(std::move(d));
  });
  if (out.empty()) warn("corpus " + path.string() + " contains no dialogues");
  return out;
}

void write_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  for (const auto& d : dialogues) out << to_json(d).dump() << '\n';
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::size_t apply_caps(std::vector<Dialogue>& dialogues, std::size_t max_utterances, std::size_t max_tokens) {
  std::size_t changed = 0;
  for (auto& d : dialogues) {
    bool cut = false;
    if (d.utterances.size() > max_utterances) {
      d.utterances.resize(max_utterances);
      cut = true;
    }
    for (auto& u : d.utterances) {
      if (u.tokens.size() > max_tokens) {
        u.tokens.resize(max_tokens);
        cut = true;
      }
    }
    if (cut) {
      ++changed;
      warn("dialogue " + d.id + " truncated to " + std::to_string(max_utterances) + " utterances / " +
           std::to_string(max_tokens) + " tokens");
    }
  }
  return changed;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() {
  tokens_ = {"[PAD]", "[UNK]", "[MASK]", "[BOS]", "[EOS]", "[MASK_REF]"};
  counts_.assign(tokens_.size(), 0);
  for (TokenId i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::build(const std::vector<Dialogue>& dialogues, std::size_t min_count,
                             const ReferenceCatalog* catalog) {
  if (min_count == 0) fail(ErrorCode::kInvalidArgument, "min_count must be at least 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& d : dialogues) {
    for (const auto& u : d.utterances)
      for (const auto& t : u.tokens) ++freq[t];
    if (d.summary)
      for (const auto& t : *d.summary) ++freq[t];
  }
  if (catalog) {
    for (std::size_t e = 0; e < catalog->size(); ++e) {
      for (const auto& t : catalog->name_tokens(e)) ++freq[t];
      for (const auto& t : catalog->entries()[e].content) ++freq[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  Vocabulary v;
  for (auto& [tok, n] : freq) {
    if (v.index_.count(tok)) continue;  // reserved spelling in the data
    if (n >= min_count) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [tok, n] : ranked) {
    v.index_.emplace(tok, v.tokens_.size());
    v.tokens_.push_back(tok);
    v.counts_.push_back(n);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < special::kReservedTokens) {
    fail(ErrorCode::kParse, "vocabulary lacks the reserved tokens");
  }
  for (std::size_t i = 0; i < special::kReservedTokens; ++i) {
    if (tokens[i] != v.tokens_[i]) fail(ErrorCode::kParse, "vocabulary reserved id " + std::to_string(i) + " mismatch");
  }
  for (std::size_t i = special::kReservedTokens; i < tokens.size(); ++i) {
    if (!v.index_.emplace(tokens[i], i).second) fail(ErrorCode::kParse, "duplicate vocabulary token " + tokens[i]);
    v.tokens_.push_back(tokens[i]);
    v.counts_.push_back(0);
  }
  return v;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? special::kUnk : it->second;
}

std::vector<TokenId> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

// ------------------------------------------------------------------- RoleSet

RoleSet::RoleSet() {
  names_ = {"[PAD_ROLE]", "[MASK_ROLE]"};
  index_ = {{names_[0], 0}, {names_[1], 1}};
}

RoleSet RoleSet::build(const std::vector<Dialogue>& dialogues) {
  std::set<std::string> roles;
  for (const auto& d : dialogues)
    for (const auto& u : d.utterances) roles.insert(u.role);
  return from_names({roles.begin(), roles.end()});
}

RoleSet RoleSet::from_names(const std::vector<std::string>& names) {
  RoleSet r;
  for (const auto& n : names) {
    if (n == r.names_[0] || n == r.names_[1]) continue;
    if (!r.index_.emplace(n, r.names_.size()).second) fail(ErrorCode::kParse, "duplicate role " + n);
    r.names_.push_back(n);
  }
  return r;
}

RoleId RoleSet::id(const std::string& role) const {
  auto it = index_.find(role);
  if (it == index_.end()) fail(ErrorCode::kInvalidArgument, "unknown role \"" + role + "\"");
  return it->second;
}

// ---------------------------------------------------------- ReferenceCatalog

ReferenceCatalog::ReferenceCatalog(std::vector<ReferenceEntry> entries, std::size_t t_max)
    : entries_(std::move(entries)), t_max_(t_max) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.name.empty()) fail(ErrorCode::kParse, "reference with an empty name");
    if (!seen.insert(e.name).second) fail(ErrorCode::kParse, "duplicate reference name \"" + e.name + "\"");
    content_.insert(content_.end(), e.content.begin(), e.content.end());
  }
  if (content_.size() > t_max_) {
    warn("reference content truncated from " + std::to_string(content_.size()) + " to " +
         std::to_string(t_max_) + " tokens");
    content_.resize(t_max_);
  }
}

std::optional<std::size_t> ReferenceCatalog::index(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> ReferenceCatalog::name_tokens(std::size_t entry) const {
  return split_ws(entries_.at(entry).name);
}

nlohmann::json ReferenceCatalog::to_json() const {
  json arr = json::array();
  for (const auto& e : entries_) arr.push_back({{"name", e.name}, {"content", e.content}});
  return arr;
}

ReferenceCatalog ReferenceCatalog::from_json(const nlohmann::json& j, std::size_t t_max) {
  std::vector<ReferenceEntry> entries;
  std::size_t k = 0;
  for (const auto& e : j) {
    ++k;
    if (!e.is_object() || !e.contains("name") || !e["name"].is_string()) {
      field_error(k, "reference entry missing string field \"name\"");
    }
    if (!e.contains("content")) field_error(k, "reference entry missing field \"content\"");
    entries.push_back({e["name"].get<std::string>(), string_list(e["content"], k, "content")});
  }
  return ReferenceCatalog(std::move(entries), t_max);
}

ReferenceCatalog load_reference_catalog(const std::filesystem::path& path, std::size_t t_max) {
  json arr = json::array();
  for_each_line(path, [&](const json& j, std::size_t) { arr.push_back(j); });
  return ReferenceCatalog::from_json(arr, t_max);
}

void write_reference_catalog(const std::filesystem::path& path, const ReferenceCatalog& catalog) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  for (const auto& e : catalog.entries()) {
    out << nlohmann::ordered_json({{"name", e.name}, {"content", e.content}}).dump() << '\n';
  }
}

// --------------------------------------------------------------------- Stats

nlohmann::json Stats::to_json() const {
  return {{"dialogues", dialogues},
          {"utterances", utterances},
          {"tokens", tokens},
          {"mean_length", mean_length},
          {"mean_utterance_tokens", mean_utterance_tokens},
          {"role_histogram", role_histogram},
          {"label_histogram", label_histogram},
          {"labeled_utterances", labeled_utterances},
          {"dialogues_with_summary", dialogues_with_summary},
          {"dialogues_with_references", dialogues_with_references}};
}

Stats corpus_stats(const std::vector<Dialogue>& dialogues) {
  if (dialogues.empty()) fail(ErrorCode::kInvalidArgument, "corpus statistics of an empty corpus");
  Stats s;
  std::map<std::string, std::size_t> roles, labels;
  for (const auto& d : dialogues) {
    ++s.dialogues;
    s.utterances += d.utterances.size();
    if (d.summary) ++s.dialogues_with_summary;
    if (!d.references.empty()) ++s.dialogues_with_references;
    for (const auto& u : d.utterances) {
      s.tokens += u.tokens.size();
      ++roles[u.role];
      if (u.label) {
        ++labels[*u.label];
        ++s.labeled_utterances;
      }
    }
  }
  s.mean_length = static_cast<double>(s.utterances) / static_cast<double>(s.dialogues);
  s.mean_utterance_tokens = static_cast<double>(s.tokens) / static_cast<double>(s.utterances);
  for (const auto& [r, n] : roles) s.role_histogram[r] = static_cast<double>(n) / static_cast<double>(s.utterances);
  for (const auto& [l, n] : labels) {
    s.label_histogram[l] = static_cast<double>(n) / static_cast<double>(s.labeled_utterances);
  }
  return s;
}

Split split_of(const std::string& dialogue_id) {
  const auto bucket = fnv1a64(dialogue_id) % 10;
  if (bucket < 8) return Split::kTrain;
  return bucket == 8 ? Split::kValidation : Split::kTest;
}

std::vector<Dialogue> select_split(const std::vector<Dialogue>& dialogues, Split split) {
  std::vector<Dialogue> out;
  for (const auto& d : dialogues) {
    if (split_of(d.id) == split) out.push_back(d);
  }
  return out;
}

}  // namespace masko::corpus
