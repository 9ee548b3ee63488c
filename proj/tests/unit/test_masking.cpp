// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cmath>
#include <set>

#include "masko/config.hpp"
#include "masko/error.hpp"
#include "masko/masking.hpp"
#include "masko/synthetic.hpp"

using namespace masko;
using namespace masko::masking;
using corpus::Dialogue;
namespace special = corpus::special;

namespace {

struct Fixture {
  corpus::SyntheticCorpus syn;
  corpus::Vocabulary vocab;
  corpus::RoleSet roles;

  explicit Fixture(std::size_t dialogues, std::size_t references = 3, std::uint64_t seed = 5) {
    corpus::SyntheticConfig cfg;
    cfg.dialogues = dialogues;
    cfg.references = references;
    cfg.seed = seed;
    syn = corpus::generate_synthetic_corpus(cfg);
    vocab = corpus::Vocabulary::build(syn.dialogues, 1, syn.catalog ? &*syn.catalog : nullptr);
    roles = corpus::RoleSet::build(syn.dialogues);
  }
};

}  // namespace

TEST_CASE("mask counts") {
  CHECK(mask_count(20, 0.15) == 3);
  CHECK(mask_count(3, 0.15) == 1);
  CHECK(mask_count(10, 0.15) == 2);
  CHECK(mask_count(1, 0.15) == 1);
  CHECK(mask_count(30, 0.15) == 5);
  Rng rng(1);
  CHECK(select_word_masks(20, 0.15, rng).size() == 3);
  CHECK(select_word_masks(3, 0.15, rng).size() == 1);
  CHECK(select_role_masks(10, 0.15, rng).size() == 2);
  CHECK(select_role_masks(1, 0.15, rng) == std::vector<std::size_t>{0});
  CHECK(select_generation_sentence(1, rng) == 0);
}

TEST_CASE("mask selection is deterministic and distinct") {
  for (std::size_t l = 1; l <= 50; ++l) {
    Rng a(l), b(l);
    auto x = select_word_masks(l, 0.15, a);
    auto y = select_word_masks(l, 0.15, b);
    CHECK(x == y);
    CHECK(std::set<std::size_t>(x.begin(), x.end()).size() == x.size());
    for (auto p : x) CHECK(p < l);
  }
  Rng a(3), b(3);
  CHECK(select_role_masks(17, 0.15, a) == select_role_masks(17, 0.15, b));
  Rng c(4), e(4);
  CHECK(select_generation_sentence(9, c) == select_generation_sentence(9, e));
}

TEST_CASE("word masks are uniform over positions") {
  Rng rng(11);
  std::vector<double> freq(10, 0.0);
  const int draws = 100000;
  for (int n = 0; n < draws; ++n)
    for (auto p : select_word_masks(10, 0.15, rng)) freq[p] += 1.0;
  for (double f : freq) CHECK(std::abs(f / draws - 0.2) < 0.01);
}

TEST_CASE("generation sentence is uniform") {
  Rng rng(12);
  std::vector<double> freq(5, 0.0);
  const int draws = 100000;
  for (int n = 0; n < draws; ++n) freq[select_generation_sentence(5, rng)] += 1.0;
  for (double f : freq) CHECK(std::abs(f / draws - 0.2) < 0.01);
}

TEST_CASE("reference substitution") {
  const std::vector<std::vector<TokenId>> names{{10, 11}, {10, 11, 12}, {20}};
  CHECK(substitute_references({1, 10, 11, 12, 7}, names) == std::vector<TokenId>{1, special::kMaskRef, 7});
  CHECK(substitute_references({10, 11, 9, 20}, names) ==
        std::vector<TokenId>{special::kMaskRef, 9, special::kMaskRef});
  CHECK(substitute_references({10, 9}, names) == std::vector<TokenId>{10, 9});
}

TEST_CASE("build_pretraining_instance") {
  corpus::ReferenceCatalog catalog({{"law0 article", {"a", "b"}}, {"law1 article", {"c"}}, {"law2 article", {"d"}}},
                                   100);
  Dialogue d;
  d.id = "two";
  d.utterances.push_back({"judge", {"p", "law0", "article"}, std::nullopt});
  d.utterances.push_back({"witness", {"q", "r", "s"}, std::nullopt});
  d.references = {"law0 article"};
  auto vocab = corpus::Vocabulary::build({d}, 1, &catalog);
  auto roles = corpus::RoleSet::build({d});
  MaskingConfig cfg;

  SUBCASE("label vector") {
    auto inst = build_pretraining_instance(d, &catalog, vocab, roles, cfg);
    REQUIRE(inst.reference_labels.has_value());
    CHECK(*inst.reference_labels == std::vector<int>{1, 0, 0});
  }
  SUBCASE("knowledge off") {
    cfg.use_knowledge = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cfg.seed = seed;
      auto inst = build_pretraining_instance(d, &catalog, vocab, roles, cfg);
      CHECK_FALSE(inst.reference_labels.has_value());
      for (const auto& u : inst.tokens)
        for (auto t : u) CHECK(t != special::kMaskRef);
    }
  }
  SUBCASE("two sentences of length three") {
    Dialogue plain = d;
    plain.utterances[0].tokens = {"p", "q", "r"};
    plain.references.clear();
    cfg.use_knowledge = false;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      cfg.seed = seed;
      auto inst = build_pretraining_instance(plain, nullptr, vocab, roles, cfg);
      REQUIRE(inst.word_masks.size() == 1);
      CHECK(inst.word_masks[0].utterance != inst.generation_index);
      CHECK(inst.role_masks.size() == 1);
      CHECK(inst.generation_target.size() == 5);
      CHECK(inst.generation_target.front() == special::kBos);
      CHECK(inst.generation_target.back() == special::kEos);
      for (auto t : inst.tokens[inst.generation_index]) CHECK(t == special::kMask);
    }
  }
  SUBCASE("cited name outside the catalog") {
    Dialogue bad = d;
    bad.references = {"law9 article"};
    CHECK_THROWS_AS(build_pretraining_instance(bad, &catalog, vocab, roles, cfg), Error);
  }
  SUBCASE("knowledge mode without a catalog") {
    CHECK_THROWS_AS(build_pretraining_instance(d, nullptr, vocab, roles, cfg), Error);
  }
}

TEST_CASE("instance invariants over a synthetic corpus") {
  Fixture fx(300, 6);
  MaskingConfig cfg;
  cfg.seed = 77;
  for (const auto& d : fx.syn.dialogues) {
    auto inst = build_pretraining_instance(d, &*fx.syn.catalog, fx.vocab, fx.roles, cfg, 3);
    auto again = build_pretraining_instance(d, &*fx.syn.catalog, fx.vocab, fx.roles, cfg, 3);
    CHECK(inst.to_json() == again.to_json());
    auto src = encode_dialogue(d, fx.vocab, fx.roles);
    REQUIRE(inst.reference_labels->size() == fx.syn.catalog->size());

    std::set<std::pair<std::size_t, std::size_t>> masked;
    for (const auto& z : inst.word_masks) {
      CHECK(z.utterance != inst.generation_index);
      CHECK(inst.tokens[z.utterance][z.position] == special::kMask);
      CHECK(z.target >= special::kReservedTokens);
      masked.insert({z.utterance, z.position});
    }
    for (const auto& g : inst.role_masks) {
      CHECK(g.utterance != inst.generation_index);
      CHECK(inst.roles[g.utterance] == special::kMaskRole);
      CHECK(g.target == src.roles[g.utterance]);
    }
    for (std::size_t i = 0; i < src.roles.size(); ++i) {
      bool role_masked = false;
      for (const auto& g : inst.role_masks) role_masked = role_masked || g.utterance == i;
      if (!role_masked) CHECK(inst.roles[i] == src.roles[i]);
      if (i == inst.generation_index) continue;
      // Unmasked positions equal the source once names are collapsed.
      std::vector<std::vector<TokenId>> names;
      for (std::size_t e = 0; e < fx.syn.catalog->size(); ++e) {
        names.push_back(fx.vocab.encode(fx.syn.catalog->name_tokens(e)));
      }
      auto collapsed = substitute_references(src.tokens[i], names);
      REQUIRE(collapsed.size() == inst.tokens[i].size());
      for (std::size_t j = 0; j < collapsed.size(); ++j) {
        if (!masked.count({i, j})) CHECK(inst.tokens[i][j] == collapsed[j]);
      }
    }
  }
}

TEST_CASE("dialogue fraction of masked words stays near the rate") {
  Fixture fx(1000, 0, 9);
  MaskingConfig cfg;
  cfg.use_knowledge = false;
  double masked = 0, total = 0;
  for (const auto& d : fx.syn.dialogues) {
    auto inst = build_pretraining_instance(d, nullptr, fx.vocab, fx.roles, cfg);
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
      if (i == inst.generation_index || inst.tokens[i].size() < 7) continue;
      total += static_cast<double>(inst.tokens[i].size());
      for (const auto& z : inst.word_masks) masked += z.utterance == i;
    }
  }
  CHECK(masked / total >= 0.13);
  CHECK(masked / total <= 0.18);
}

TEST_CASE("run config") {
  RunConfig c;
  CHECK(c.word_emb_dim == 300);
  CHECK(c.role_emb_dim == 100);
  CHECK(c.hidden_dim == 256);
  CHECK(c.transformer_layers == 2);
  CHECK(c.ff_dim == 1024);
  CHECK(c.heads == 4);
  CHECK(c.lr == 5e-4);
  CHECK(RunConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(RunConfig::from_json({{"hidden", 3}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json({{"hidden_dim", -3}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json({{"hidden_dim", 3}, {"heads", 4}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json({{"use_knowledge", false}}), Error);
  CHECK(RunConfig::from_json({{"use_knowledge", false}, {"objectives", "w,r,s"}}).objective_set() ==
        ObjectiveSet{true, true, true, false});
  CHECK_THROWS_AS(ObjectiveSet::parse("w,x"), Error);
  CHECK(ObjectiveSet::parse("f,w").to_string() == "w,f");
}
