// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/model.hpp"

#include "masko/error.hpp"

namespace masko {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kPretrain: return "pretrain";
    case ModelKind::kClassify: return "classify";
    case ModelKind::kGenerate: return "generate";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "pretrain") return ModelKind::kPretrain;
  if (s == "classify") return ModelKind::kClassify;
  if (s == "generate") return ModelKind::kGenerate;
  fail(ErrorCode::kParse, "unknown model kind \"" + s + "\"");
}

void init_model_shell(Model& m, const RunConfig& cfg, corpus::Vocabulary vocab, corpus::RoleSet roles,
                      const corpus::ReferenceCatalog* catalog) {
  cfg.validate();
  m.config = cfg;
  m.vocab = std::move(vocab);
  m.roles = std::move(roles);
  m.catalog.reset();
  m.content.clear();
  if (cfg.use_knowledge) {
    if (catalog == nullptr || catalog->empty()) {
      fail(ErrorCode::kInvalidArgument, "knowledge mode needs a non-empty reference catalog");
    }
    m.catalog = *catalog;
    m.content = m.vocab.encode(catalog->content());
  }
  m.dims = encoder::ModelDims::from_config(cfg, m.vocab.size(), m.roles.size());
}

nlohmann::json Model::meta() const {
  nlohmann::json j = {{"kind", to_string(kind)},
                      {"vocab", vocab.tokens()},
                      {"roles", roles.names()},
                      {"labels", labels},
                      {"objectives", objectives.to_string()},
                      {"init", init}};
  if (catalog) {
    j["catalog"] = catalog->to_json();
    j["catalog_t_max"] = catalog->t_max();
  } else {
    j["catalog"] = nullptr;
  }
  return j;
}

Checkpoint Model::to_checkpoint(const Adam* optimizer) const {
  return snapshot(params, optimizer, config.to_json(), meta(), seed);
}

Model model_shell_from_checkpoint(const Checkpoint& ckpt) {
  Model m;
  try {
    const auto& meta = ckpt.meta;
    m.kind = parse_model_kind(meta.at("kind").get<std::string>());
    RunConfig cfg = RunConfig::from_json(ckpt.config);
    auto vocab = corpus::Vocabulary::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
    auto names = meta.at("roles").get<std::vector<std::string>>();
    auto roles = corpus::RoleSet::from_names(names);
    if (roles.names() != names) fail(ErrorCode::kParse, "role table in checkpoint is not canonical");
    std::optional<corpus::ReferenceCatalog> catalog;
    if (!meta.at("catalog").is_null()) {
      catalog = corpus::ReferenceCatalog::from_json(meta.at("catalog"), meta.at("catalog_t_max").get<std::size_t>());
    }
    init_model_shell(m, cfg, std::move(vocab), std::move(roles), catalog ? &*catalog : nullptr);
    m.labels = meta.at("labels").get<std::vector<std::string>>();
    m.objectives = ObjectiveSet::parse(meta.at("objectives").get<std::string>());
    m.seed = ckpt.seed;
    m.init = meta.value("init", "random");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint header: ") + e.what());
  }
  return m;
}

}  // namespace masko
