// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/synthetic.hpp"

#include <algorithm>
#include <set>

#include "masko/error.hpp"
#include "masko/rng.hpp"

namespace masko::corpus {
namespace {

using Phrase = std::vector<std::string>;

constexpr std::size_t kPhraseLength = 3;

struct PhraseTable {
  // [block][group] -> phrases; block 0 is shared, group 0 is noise.
  std::vector<std::vector<std::vector<Phrase>>> phrases;
};

PhraseTable build_phrases(const SyntheticConfig& cfg) {
  const std::size_t blocks = cfg.roles + 1;
  const std::size_t groups = cfg.topics + 1;
  const std::size_t cells = blocks * groups;
  PhraseTable table;
  table.phrases.assign(blocks, std::vector<std::vector<Phrase>>(groups));
  Rng rng(derive_seed(cfg.seed, fnv1a64("phrases")));
  std::size_t next = 0;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    // Spread the remainder over the first cells so exactly vocab_size
    // tokens exist.
    const std::size_t n = cfg.vocab_size / cells + (cell < cfg.vocab_size % cells ? 1 : 0);
    std::vector<std::string> tokens;
    for (std::size_t k = 0; k < n; ++k) tokens.push_back("w" + std::to_string(next++));
    auto& out = table.phrases[cell / groups][cell % groups];
    for (std::size_t p = 0; p < cfg.phrases_per_group; ++p) {
      Phrase phrase;
      for (std::size_t k = 0; k < kPhraseLength; ++k) {
        phrase.push_back(tokens[uniform_below(rng, tokens.size())]);
      }
      out.push_back(std::move(phrase));
    }
    // Every token of the cell appears in at least one phrase.
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      out[k / kPhraseLength % out.size()][k % kPhraseLength] = tokens[k];
    }
  }
  return table;
}

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform_below(rng, hi - lo + 1));
}

std::string reference_name(std::size_t j) { return "law" + std::to_string(j) + " article"; }

}  // namespace

std::string synthetic_role_name(std::size_t role) {
  static const char* kNames[] = {"judge", "plaintiff", "defendant", "witness"};
  return role < 4 ? kNames[role] : "role" + std::to_string(role);
}

std::string synthetic_topic_label(std::size_t topic) { return "topic" + std::to_string(topic); }

void SyntheticConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::kInvalidArgument, std::string("synthetic config: ") + what);
  };
  check(dialogues > 0, "dialogues must be positive");
  check(min_utterances > 0 && min_utterances <= max_utterances, "need 0 < min_utterances <= max_utterances");
  check(min_tokens > 0 && min_tokens <= max_tokens, "need 0 < min_tokens <= max_tokens");
  check(roles > 0, "roles must be positive");
  check(topics > 0, "topics must be positive");
  check(phrases_per_group > 0, "phrases_per_group must be positive");
  check(vocab_size >= (roles + 1) * (topics + 1), "vocab_size must cover one token per block and group");
  check(skew >= 0.0 && skew <= 1.0, "skew must lie in [0, 1]");
  check(topic_rate >= 0.0 && topic_rate <= 1.0, "topic_rate must lie in [0, 1]");
  check(citation_rate >= 0.0 && citation_rate <= 1.0, "citation_rate must lie in [0, 1]");
}

nlohmann::json SyntheticConfig::to_json() const {
  return {{"dialogues", dialogues},         {"min_utterances", min_utterances},
          {"max_utterances", max_utterances}, {"min_tokens", min_tokens},
          {"max_tokens", max_tokens},       {"vocab_size", vocab_size},
          {"roles", roles},                 {"skew", skew},
          {"topics", topics},               {"topic_rate", topic_rate},
          {"phrases_per_group", phrases_per_group}, {"references", references},
          {"citation_rate", citation_rate}, {"seed", seed}};
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  const nlohmann::json known = c.to_json();
  if (!j.is_object()) fail(ErrorCode::kParse, "synthetic config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) fail(ErrorCode::kParse, "unknown synthetic config key \"" + it.key() + "\"");
  }
  try {
    c.dialogues = j.value("dialogues", c.dialogues);
    c.min_utterances = j.value("min_utterances", c.min_utterances);
    c.max_utterances = j.value("max_utterances", c.max_utterances);
    c.min_tokens = j.value("min_tokens", c.min_tokens);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.roles = j.value("roles", c.roles);
    c.skew = j.value("skew", c.skew);
    c.topics = j.value("topics", c.topics);
    c.topic_rate = j.value("topic_rate", c.topic_rate);
    c.phrases_per_group = j.value("phrases_per_group", c.phrases_per_group);
    c.references = j.value("references", c.references);
    c.citation_rate = j.value("citation_rate", c.citation_rate);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg, std::size_t t_max) {
  cfg.validate();
  const PhraseTable table = build_phrases(cfg);
  SyntheticCorpus out;

  // Reference j belongs to topic j % topics; its content is drawn from that
  // topic's shared-block phrases.
  std::vector<ReferenceEntry> entries;
  if (cfg.references > 0) {
    Rng rng(derive_seed(cfg.seed, fnv1a64("catalog")));
    for (std::size_t j = 0; j < cfg.references; ++j) {
      const auto& pool = table.phrases[0][1 + j % cfg.topics];
      ReferenceEntry e{reference_name(j), {}};
      for (int p = 0; p < 2; ++p) {
        const auto& phrase = pool[uniform_below(rng, pool.size())];
        e.content.insert(e.content.end(), phrase.begin(), phrase.end());
      }
      entries.push_back(std::move(e));
    }
  }

  const std::size_t width = std::to_string(cfg.dialogues - 1).size();
  for (std::size_t n = 0; n < cfg.dialogues; ++n) {
    Rng rng(derive_seed(cfg.seed, fnv1a64("dialogue"), n));
    Dialogue d;
    std::string num = std::to_string(n);
    d.id = "d" + std::string(width - num.size(), '0') + num;

    const std::size_t L = draw_between(rng, cfg.min_utterances, cfg.max_utterances);
    const std::size_t segments = std::min<std::size_t>(L, 1 + uniform_below(rng, 2));
    std::vector<std::size_t> seg_start{0};
    if (segments == 2) seg_start.push_back(1 + uniform_below(rng, L - 1));
    seg_start.push_back(L);
    std::vector<std::size_t> seg_topic;
    for (std::size_t s = 0; s < segments; ++s) {
      std::size_t t = uniform_below(rng, cfg.topics);
      if (s > 0 && cfg.topics > 1 && t == seg_topic.back()) t = (t + 1) % cfg.topics;
      seg_topic.push_back(t);
    }

    std::vector<bool> on_topic(L, false);
    std::vector<std::size_t> seg_of(L);
    for (std::size_t s = 0; s < segments; ++s) {
      bool any = false;
      for (std::size_t i = seg_start[s]; i < seg_start[s + 1]; ++i) {
        seg_of[i] = s;
        on_topic[i] = uniform01(rng) < cfg.topic_rate;
        any = any || on_topic[i];
      }
      if (!any) on_topic[seg_start[s] + uniform_below(rng, seg_start[s + 1] - seg_start[s])] = true;
    }

    for (std::size_t i = 0; i < L; ++i) {
      Utterance u;
      const std::size_t role = uniform_below(rng, cfg.roles);
      u.role = synthetic_role_name(role);
      const std::size_t group = on_topic[i] ? 1 + seg_topic[seg_of[i]] : 0;
      const std::size_t len = draw_between(rng, cfg.min_tokens, cfg.max_tokens);
      while (u.tokens.size() < len) {
        const std::size_t block = uniform01(rng) < cfg.skew ? 1 + role : 0;
        const auto& pool = table.phrases[block][group];
        const auto& phrase = pool[uniform_below(rng, pool.size())];
        for (const auto& tok : phrase) {
          if (u.tokens.size() < len) u.tokens.push_back(tok);
        }
      }
      bool labeled = false;
      for (std::size_t k = (i == 0 ? 0 : i - 1); k <= std::min(L - 1, i + 1); ++k) {
        labeled = labeled || (seg_of[k] == seg_of[i] && on_topic[k]);
      }
      u.label = labeled ? synthetic_topic_label(seg_topic[seg_of[i]]) : kNoiseLabel;
      d.utterances.push_back(std::move(u));
    }

    std::vector<std::string> summary{"dispute", "over"};
    for (std::size_t s = 0; s < segments; ++s) {
      if (s > 0) summary.push_back("and");
      summary.push_back(synthetic_topic_label(seg_topic[s]));
    }
    d.summary = std::move(summary);

    // Citations: a matching-topic reference is named inside one on-topic
    // utterance of the segment, at a phrase boundary.
    std::set<std::size_t> cited;
    for (std::size_t s = 0; s < segments; ++s) {
      for (std::size_t j = 0; j < cfg.references; ++j) {
        if (j % cfg.topics != seg_topic[s]) continue;
        if (uniform01(rng) >= cfg.citation_rate) continue;
        std::vector<std::size_t> hosts;
        for (std::size_t i = seg_start[s]; i < seg_start[s + 1]; ++i) {
          if (on_topic[i]) hosts.push_back(i);
        }
        auto& toks = d.utterances[hosts[uniform_below(rng, hosts.size())]].tokens;
        const std::size_t slots = toks.size() / kPhraseLength + 1;
        const std::size_t at = std::min(toks.size(), kPhraseLength * uniform_below(rng, slots));
        toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(at), {"law" + std::to_string(j), "article"});
        cited.insert(j);
      }
    }
    for (std::size_t j : cited) d.references.push_back(reference_name(j));
    out.dialogues.push_back(std::move(d));
  }
  if (cfg.references > 0) out.catalog = ReferenceCatalog(std::move(entries), t_max);
  return out;
}

}  // namespace masko::corpus
