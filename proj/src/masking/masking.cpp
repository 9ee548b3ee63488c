// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/masking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "masko/error.hpp"

namespace masko::masking {

using corpus::special::kBos;
using corpus::special::kEos;
using corpus::special::kMask;
using corpus::special::kMaskRef;
using corpus::special::kMaskRole;
using corpus::special::kUnk;

std::size_t mask_count(std::size_t n, double rate) {
  if (n == 0) return 0;
  // The small slack keeps exact halves such as 0.15 * 30 from rounding down
  // through representation error.
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 0.5 + 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

namespace {

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_below(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<std::size_t> select_word_masks(std::size_t l, double rate, Rng& rng) {
  if (l == 0) fail(ErrorCode::kInvalidArgument, "select_word_masks: empty sentence");
  return sample_without_replacement(l, mask_count(l, rate), rng);
}

std::vector<std::size_t> select_role_masks(std::size_t L, double rate, Rng& rng) {
  if (L == 0) fail(ErrorCode::kInvalidArgument, "select_role_masks: empty dialogue");
  return sample_without_replacement(L, mask_count(L, rate), rng);
}

std::size_t select_generation_sentence(std::size_t L, Rng& rng) {
  if (L == 0) fail(ErrorCode::kInvalidArgument, "select_generation_sentence: empty dialogue");
  return uniform_below(rng, L);
}

EncodedDialogue encode_dialogue(const corpus::Dialogue& d, const corpus::Vocabulary& vocab,
                                const corpus::RoleSet& roles) {
  if (d.utterances.empty()) fail(ErrorCode::kInvalidArgument, "dialogue " + d.id + " has no utterances");
  EncodedDialogue out;
  for (const auto& u : d.utterances) {
    if (u.tokens.empty()) fail(ErrorCode::kInvalidArgument, "dialogue " + d.id + " has an empty utterance");
    out.tokens.push_back(vocab.encode(u.tokens));
    const RoleId r = roles.id(u.role);
    if (r < corpus::special::kReservedRoles) {
      fail(ErrorCode::kInvalidArgument, "dialogue " + d.id + " uses reserved role " + u.role);
    }
    out.roles.push_back(r);
  }
  return out;
}

std::vector<TokenId> substitute_references(const std::vector<TokenId>& tokens,
                                           const std::vector<std::vector<TokenId>>& names) {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t best = 0;
    for (const auto& name : names) {
      if (name.empty() || name.size() <= best || i + name.size() > tokens.size()) continue;
      if (std::equal(name.begin(), name.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) best = name.size();
    }
    if (best > 0) {
      out.push_back(kMaskRef);
      i += best;
    } else {
      out.push_back(tokens[i++]);
    }
  }
  return out;
}

std::vector<int> reference_labels(const corpus::Dialogue& d, const corpus::ReferenceCatalog& catalog) {
  std::vector<int> bits(catalog.size(), 0);
  for (const auto& name : d.references) {
    auto idx = catalog.index(name);
    if (!idx) fail(ErrorCode::kInvalidArgument, "dialogue " + d.id + " cites \"" + name + "\", absent from the catalog");
    bits[*idx] = 1;
  }
  return bits;
}

PretrainInstance build_pretraining_instance(const corpus::Dialogue& d, const corpus::ReferenceCatalog* catalog,
                                            const corpus::Vocabulary& vocab, const corpus::RoleSet& roles,
                                            const MaskingConfig& cfg, std::uint64_t epoch) {
  const bool knowledge = cfg.use_knowledge;
  if (knowledge && (catalog == nullptr || catalog->empty())) {
    fail(ErrorCode::kInvalidArgument, "knowledge mode needs a non-empty reference catalog");
  }
  EncodedDialogue enc = encode_dialogue(d, vocab, roles);
  const std::size_t L = enc.tokens.size();

  PretrainInstance inst;
  inst.dialogue_id = d.id;
  inst.roles = enc.roles;

  // Names are located before word masking so a mask never splits a name;
  // word masks are then drawn over the remaining ordinary positions.
  std::vector<std::vector<TokenId>> names;
  if (knowledge) {
    inst.reference_labels = reference_labels(d, *catalog);
    for (std::size_t e = 0; e < catalog->size(); ++e) {
      auto ids = vocab.encode(catalog->name_tokens(e));
      if (std::find(ids.begin(), ids.end(), kUnk) == ids.end()) names.push_back(std::move(ids));
    }
  }

  Rng rng(derive_seed(cfg.seed, epoch, fnv1a64(d.id)));
  inst.generation_index = select_generation_sentence(L, rng);
  const std::size_t m = inst.generation_index;
  inst.generation_target.push_back(kBos);
  inst.generation_target.insert(inst.generation_target.end(), enc.tokens[m].begin(), enc.tokens[m].end());
  inst.generation_target.push_back(kEos);

  inst.tokens.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    if (i == m) {
      inst.tokens[i].assign(enc.tokens[i].size(), kMask);
      continue;
    }
    auto& toks = inst.tokens[i];
    toks = knowledge ? substitute_references(enc.tokens[i], names) : enc.tokens[i];
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < toks.size(); ++j) {
      if (toks[j] != kMaskRef) candidates.push_back(j);
    }
    if (candidates.empty()) continue;
    for (std::size_t k : select_word_masks(candidates.size(), cfg.word_mask_rate, rng)) {
      const std::size_t j = candidates[k];
      inst.word_masks.push_back({i, j, toks[j]});
      toks[j] = kMask;
    }
  }

  // Role masks skip the generation sentence: with its tokens all [MASK] and
  // its role hidden as well, nothing of the utterance itself is left to
  // predict from. The count still follows L; a one-utterance dialogue masks
  // its only role.
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < L; ++i) {
    if (i != inst.generation_index) others.push_back(i);
  }
  if (others.empty()) others.push_back(inst.generation_index);
  const std::size_t g = std::min(mask_count(L, cfg.role_mask_rate), others.size());
  for (std::size_t k : sample_without_replacement(others.size(), g, rng)) {
    const std::size_t i = others[k];
    inst.role_masks.push_back({i, inst.roles[i]});
    inst.roles[i] = kMaskRole;
  }
  return inst;
}

nlohmann::json PretrainInstance::to_json() const {
  nlohmann::json z = nlohmann::json::array();
  for (const auto& w : word_masks) z.push_back({w.utterance, w.position, w.target});
  nlohmann::json g = nlohmann::json::array();
  for (const auto& r : role_masks) g.push_back({r.utterance, r.target});
  nlohmann::json j = {{"id", dialogue_id},
                      {"tokens", tokens},
                      {"roles", roles},
                      {"word_masks", z},
                      {"role_masks", g},
                      {"generation_index", generation_index},
                      {"generation_target", generation_target}};
  if (reference_labels) j["reference_labels"] = *reference_labels;
  return j;
}

void dump_instances(const std::filesystem::path& path, const std::vector<PretrainInstance>& instances) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  for (const auto& inst : instances) out << inst.to_json().dump() << '\n';
}

}  // namespace masko::masking
