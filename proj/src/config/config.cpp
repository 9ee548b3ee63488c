// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/config.hpp"

#include <sstream>

#include "masko/error.hpp"

namespace masko {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { fail(ErrorCode::kInvalidArgument, "config: " + msg); }

void read(const json& j, const char* key, std::size_t& out) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  if (!v.is_number_unsigned()) bad(std::string("\"") + key + "\" must be a non-negative integer");
  out = v.get<std::size_t>();
}

void read(const json& j, const char* key, std::uint64_t& out, int) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  if (!v.is_number_unsigned()) bad(std::string("\"") + key + "\" must be a non-negative integer");
  out = v.get<std::uint64_t>();
}

void read(const json& j, const char* key, double& out) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  if (!v.is_number()) bad(std::string("\"") + key + "\" must be a number");
  out = v.get<double>();
}

void read(const json& j, const char* key, bool& out) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  if (!v.is_boolean()) bad(std::string("\"") + key + "\" must be a boolean");
  out = v.get<bool>();
}

void read(const json& j, const char* key, std::string& out) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  if (!v.is_string()) bad(std::string("\"") + key + "\" must be a string");
  out = v.get<std::string>();
}

}  // namespace

ObjectiveSet ObjectiveSet::parse(const std::string& text) {
  ObjectiveSet s{false, false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "w") {
      s.word = true;
    } else if (item == "r") {
      s.role = true;
    } else if (item == "s") {
      s.sentence = true;
    } else if (item == "f") {
      s.reference = true;
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown objective \"" + item + "\" (expected w, r, s or f)");
    }
  }
  if (!s.any()) fail(ErrorCode::kInvalidArgument, "at least one objective must be enabled");
  return s;
}

std::string ObjectiveSet::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* k) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += k;
  };
  add(word, "w");
  add(role, "r");
  add(sentence, "s");
  add(reference, "f");
  return out;
}

void RunConfig::validate() const {
  if (word_emb_dim == 0 || role_emb_dim == 0 || hidden_dim == 0 || ff_dim == 0) bad("dimensions must be positive");
  if (heads == 0 || (2 * hidden_dim) % heads != 0) bad("2 * hidden_dim must be divisible by heads");
  if (t_max == 0) bad("t_max must be positive");
  if (!(lr > 0.0)) bad("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) bad("betas must lie in [0, 1)");
  if (!(eps > 0.0)) bad("eps must be positive");
  if (!(word_mask_rate > 0.0 && word_mask_rate < 1.0)) bad("word_mask_rate must lie in (0, 1)");
  if (!(role_mask_rate > 0.0 && role_mask_rate < 1.0)) bad("role_mask_rate must lie in (0, 1)");
  if (max_utterances == 0 || max_tokens == 0) bad("caps must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0, 1)");
  if (grad_accumulation == 0) bad("grad_accumulation must be positive");
  if (min_count == 0) bad("min_count must be positive");
  if (max_decode_len == 0) bad("max_decode_len must be positive");
  for (double w : {weight_word, weight_role, weight_sentence, weight_reference}) {
    if (!(w >= 0.0)) bad("loss weights must be non-negative");
  }
  activation_fn();
  const ObjectiveSet obj = objective_set();
  if (obj.reference && !use_knowledge) bad("objective f requires use_knowledge");
}

ops::Activation RunConfig::activation_fn() const {
  if (activation == "tanh") return ops::Activation::kTanh;
  if (activation == "relu") return ops::Activation::kRelu;
  bad("activation must be \"tanh\" or \"relu\"");
}

nlohmann::json RunConfig::to_json() const {
  return {{"word_emb_dim", word_emb_dim},
          {"role_emb_dim", role_emb_dim},
          {"hidden_dim", hidden_dim},
          {"transformer_layers", transformer_layers},
          {"ff_dim", ff_dim},
          {"heads", heads},
          {"use_knowledge", use_knowledge},
          {"t_max", t_max},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"word_mask_rate", word_mask_rate},
          {"role_mask_rate", role_mask_rate},
          {"epochs", epochs},
          {"seed", seed},
          {"max_utterances", max_utterances},
          {"max_tokens", max_tokens},
          {"objectives", objectives},
          {"activation", activation},
          {"dropout", dropout},
          {"grad_accumulation", grad_accumulation},
          {"normalize_losses", normalize_losses},
          {"weight_word", weight_word},
          {"weight_role", weight_role},
          {"weight_sentence", weight_sentence},
          {"weight_reference", weight_reference},
          {"min_count", min_count},
          {"max_decode_len", max_decode_len}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) { return RunConfig{}.merged(j); }

RunConfig RunConfig::merged(const nlohmann::json& j) const {
  if (!j.is_object()) bad("expected a JSON object");
  const json known = to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) bad("unknown key \"" + it.key() + "\"");
  }
  RunConfig c = *this;
  read(j, "word_emb_dim", c.word_emb_dim);
  read(j, "role_emb_dim", c.role_emb_dim);
  read(j, "hidden_dim", c.hidden_dim);
  read(j, "transformer_layers", c.transformer_layers);
  read(j, "ff_dim", c.ff_dim);
  read(j, "heads", c.heads);
  read(j, "use_knowledge", c.use_knowledge);
  read(j, "t_max", c.t_max);
  read(j, "lr", c.lr);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "eps", c.eps);
  read(j, "word_mask_rate", c.word_mask_rate);
  read(j, "role_mask_rate", c.role_mask_rate);
  read(j, "epochs", c.epochs);
  read(j, "seed", c.seed, 0);
  read(j, "max_utterances", c.max_utterances);
  read(j, "max_tokens", c.max_tokens);
  read(j, "objectives", c.objectives);
  read(j, "activation", c.activation);
  read(j, "dropout", c.dropout);
  read(j, "grad_accumulation", c.grad_accumulation);
  read(j, "normalize_losses", c.normalize_losses);
  read(j, "weight_word", c.weight_word);
  read(j, "weight_role", c.weight_role);
  read(j, "weight_sentence", c.weight_sentence);
  read(j, "weight_reference", c.weight_reference);
  read(j, "min_count", c.min_count);
  read(j, "max_decode_len", c.max_decode_len);
  c.validate();
  return c;
}

}  // namespace masko
