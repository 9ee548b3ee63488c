// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "masko/checkpoint.hpp"
#include "masko/config.hpp"
#include "masko/corpus.hpp"
#include "masko/encoder.hpp"

namespace masko {

enum class ModelKind { kPretrain, kClassify, kGenerate };
const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

// Parameters plus everything needed to interpret them: the id maps, the
// catalog and the label set. Serialized as a checkpoint whose meta block
// carries the non-tensor state.
struct Model {
  ModelKind kind = ModelKind::kPretrain;
  RunConfig config;
  encoder::ModelDims dims;
  corpus::Vocabulary vocab;
  corpus::RoleSet roles;
  std::optional<corpus::ReferenceCatalog> catalog;
  std::vector<corpus::TokenId> content;  // encoded catalog content C
  std::vector<std::string> labels;       // classification label set
  ObjectiveSet objectives;
  std::uint64_t seed = 0;
  std::string init = "random";  // "vanilla" or "pretrain" for fine-tuned models
  ParameterStore params;

  const std::vector<corpus::TokenId>* content_ptr() const { return dims.use_knowledge ? &content : nullptr; }
  std::size_t reference_count() const { return catalog ? catalog->size() : 0; }

  nlohmann::json meta() const;
  Checkpoint to_checkpoint(const Adam* optimizer = nullptr) const;
};

// Fills every field except `params` from a checkpoint's header.
Model model_shell_from_checkpoint(const Checkpoint& ckpt);

// Sets vocab/roles/catalog/content/dims from the config and data maps.
void init_model_shell(Model& m, const RunConfig& cfg, corpus::Vocabulary vocab, corpus::RoleSet roles,
                      const corpus::ReferenceCatalog* catalog);

}  // namespace masko
