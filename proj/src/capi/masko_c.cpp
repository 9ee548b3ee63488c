// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/masko.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "masko/checkpoint.hpp"
#include "masko/corpus.hpp"
#include "masko/downstream.hpp"
#include "masko/error.hpp"
#include "masko/log.hpp"
#include "masko/model.hpp"
#include "masko/objectives.hpp"
#include "masko/synthetic.hpp"

using nlohmann::json;

struct masko_corpus {
  std::vector<masko::corpus::Dialogue> dialogues;
  std::optional<masko::corpus::ReferenceCatalog> catalog;
};

struct masko_model {
  masko::Model model;
  std::optional<masko::Adam> adam;
};

namespace {

using namespace masko;

thread_local std::string g_last_error;

struct Corrupt {
  std::string message;
};

masko_status status_of(ErrorCode code) {
  return code == ErrorCode::kDivergence ? MASKO_ERR_DIVERGENCE : MASKO_ERR_INPUT;
}

// Runs `body`, translating exceptions into a status and the last error.
template <class F>
masko_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return MASKO_OK;
  } catch (const Corrupt& e) {
    g_last_error = e.message;
    return MASKO_ERR_CORRUPT;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return MASKO_ERR_INPUT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MASKO_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MASKO_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return MASKO_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const json& j) {
  if (out != nullptr) *out = dup(j.dump(2) + "\n");
}

json parse_object(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  json j = json::parse(text);
  if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "expected a JSON object");
  return j;
}

// Knowledge mode follows the corpus: no catalog means no F.P. and no
// knowledge layer.
RunConfig knowledge_from_corpus(RunConfig cfg, const masko_corpus& c, bool strict) {
  if (c.catalog) return cfg;
  ObjectiveSet obj = cfg.objective_set();
  if (obj.reference) {
    if (strict) fail(ErrorCode::kInvalidArgument, "objective f requires a reference catalog");
    obj.reference = false;
    cfg.objectives = obj.to_string();
  }
  cfg.use_knowledge = false;
  cfg.validate();
  return cfg;
}

std::vector<corpus::Dialogue> capped(const masko_corpus& c, const RunConfig& cfg) {
  auto d = c.dialogues;
  corpus::apply_caps(d, cfg.max_utterances, cfg.max_tokens);
  return d;
}

struct Splits {
  std::vector<corpus::Dialogue> train, heldout;
};

Splits split(const std::vector<corpus::Dialogue>& all) {
  Splits s;
  for (const auto& d : all) (corpus::split_of(d.id) == corpus::Split::kTrain ? s.train : s.heldout).push_back(d);
  if (s.train.empty()) fail(ErrorCode::kInvalidArgument, "corpus has no dialogues in the train split");
  if (s.heldout.empty()) fail(ErrorCode::kInvalidArgument, "corpus has no dialogues in the held-out split");
  return s;
}

Adam make_adam(const RunConfig& cfg) { return Adam(AdamHyper{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps}); }

json eval_json(Model& m, const std::vector<corpus::Dialogue>& dialogues) {
  if (m.kind == ModelKind::kPretrain) {
    json j = objectives::evaluate_pretraining(m, dialogues, m.seed).to_json();
    j.erase("loss_trace");
    return j;
  }
  return downstream::evaluate(m, dialogues).to_json();
}

WarningHandler g_default_warning;

}  // namespace

extern "C" {

void masko_string_free(char* s) { std::free(s); }

const char* masko_last_error(void) { return g_last_error.c_str(); }

const char* masko_version(void) { return "0.1.0"; }

void masko_set_warning_callback(masko_warning_fn fn, void* user) {
  if (fn == nullptr) {
    if (g_default_warning) set_warning_handler(g_default_warning);
    return;
  }
  WarningHandler prev = set_warning_handler([fn, user](const std::string& m) { fn(m.c_str(), user); });
  if (!g_default_warning) g_default_warning = std::move(prev);
}

masko_status masko_config_defaults(char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    put(out_json, RunConfig{}.to_json());
  });
}

masko_status masko_config_resolve(const char* base_json, const char* overrides_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    RunConfig cfg = RunConfig::from_json(parse_object(base_json)).merged(parse_object(overrides_json));
    put(out_json, cfg.to_json());
  });
}

masko_status masko_synthesize(const char* synthetic_config_json, const char* out_dir, char** out_manifest_json) {
  return guarded([&] {
    require(out_dir, "out_dir");
    const auto cfg = corpus::SyntheticConfig::from_json(parse_object(synthetic_config_json));
    const auto sy = corpus::generate_synthetic_corpus(cfg);
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
    corpus::write_dialogues(dir / "corpus.jsonl", sy.dialogues);
    json files = {{"corpus", "corpus.jsonl"}};
    if (sy.catalog) {
      corpus::write_reference_catalog(dir / "catalog.json", *sy.catalog);
      files["catalog"] = "catalog.json";
    } else {
      std::filesystem::remove(dir / "catalog.json", ec);
    }
    json manifest = {{"synthetic_config", cfg.to_json()},
                     {"files", files},
                     {"dialogues", sy.dialogues.size()},
                     {"knowledge", sy.catalog.has_value()},
                     {"references", sy.catalog ? sy.catalog->size() : 0}};
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
    if (!out) fail(ErrorCode::kIo, "cannot write " + (dir / "manifest.json").string());
    put(out_manifest_json, manifest);
  });
}

masko_status masko_corpus_load(const char* corpus_path, const char* catalog_path, size_t t_max, masko_corpus** out) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<masko_corpus>();
    c->dialogues = corpus::load_dialogues(corpus_path);
    if (c->dialogues.empty()) fail(ErrorCode::kInvalidArgument, std::string(corpus_path) + " holds no dialogues");
    if (catalog_path != nullptr) c->catalog = corpus::load_reference_catalog(catalog_path, t_max);
    *out = c.release();
  });
}

void masko_corpus_free(masko_corpus* corpus) { delete corpus; }

masko_status masko_corpus_size(const masko_corpus* corpus, size_t* out_dialogues) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out_dialogues, "out_dialogues");
    *out_dialogues = corpus->dialogues.size();
  });
}

masko_status masko_corpus_stats(const masko_corpus* corpus, char** out_json) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out_json, "out_json");
    put(out_json, corpus::corpus_stats(corpus->dialogues).to_json());
  });
}

masko_status masko_pretrain(const masko_corpus* corpus, const char* config_json, masko_model** out_model,
                            char** out_metrics_json) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out_model, "out_model");
    *out_model = nullptr;
    const json raw = parse_object(config_json);
    RunConfig cfg;
    if (!corpus->catalog) {
      // Defaults assume knowledge mode; a catalog-free run has to drop f itself.
      const bool wants_f = !raw.contains("objectives") || ObjectiveSet::parse(raw["objectives"].get<std::string>()).reference;
      if (wants_f) fail(ErrorCode::kInvalidArgument, "objective f requires a reference catalog");
      cfg.use_knowledge = false;
      cfg.objectives = "w,r,s";
    }
    cfg = knowledge_from_corpus(cfg.merged(raw), *corpus, true);
    const auto all = capped(*corpus, cfg);
    const Splits s = split(all);
    const corpus::ReferenceCatalog* cat = cfg.use_knowledge ? &*corpus->catalog : nullptr;
    auto h = std::make_unique<masko_model>();
    h->model = objectives::make_pretraining_model(cfg, corpus::Vocabulary::build(s.train, cfg.min_count, cat),
                                                  corpus::RoleSet::build(all), cat, cfg.seed);
    h->adam = make_adam(cfg);
    const auto r = objectives::pretrain(h->model, *h->adam, s.train, cfg.epochs, cfg.seed);
    json epochs = json::array();
    for (const auto& e : r.epochs) {
      json row = e.mean.to_json();
      row["epoch"] = e.epoch;
      row["mean_total"] = e.mean_total;
      epochs.push_back(row);
    }
    json metrics = {{"config", cfg.to_json()},
                    {"objectives", cfg.objectives},
                    {"train_dialogues", s.train.size()},
                    {"heldout_dialogues", s.heldout.size()},
                    {"steps", r.steps},
                    {"loss_trace", r.loss_trace},
                    {"epochs", epochs},
                    {"heldout", eval_json(h->model, s.heldout)}};
    put(out_metrics_json, metrics);
    *out_model = h.release();
  });
}

masko_status masko_finetune(const masko_corpus* corpus, const char* task, const masko_model* init,
                            const char* config_json, masko_model** out_model, char** out_report_json) {
  return guarded([&] {
    require(corpus, "corpus");
    require(task, "task");
    require(out_model, "out_model");
    *out_model = nullptr;
    const ModelKind kind = parse_model_kind(task);
    if (kind == ModelKind::kPretrain) fail(ErrorCode::kInvalidArgument, "task must be classify or generate");
    if (init && init->model.kind != ModelKind::kPretrain) {
      fail(ErrorCode::kInvalidArgument, "init model is not a pretraining model");
    }
    const json raw = parse_object(config_json);
    RunConfig cfg;
    std::optional<Checkpoint> ckpt;
    downstream::TaskData data;
    if (init) {
      ckpt = init->model.to_checkpoint();
      cfg = init->model.config.merged(raw);
      data = downstream::TaskData::from_checkpoint(*ckpt);
    } else {
      cfg = RunConfig{};
      if (!corpus->catalog) {
        cfg.use_knowledge = false;
        cfg.objectives = "w,r,s";
      }
      cfg = knowledge_from_corpus(cfg.merged(raw), *corpus, false);
    }
    const auto all = capped(*corpus, cfg);
    const Splits s = split(all);
    if (!init) {
      const corpus::ReferenceCatalog* cat = cfg.use_knowledge ? &*corpus->catalog : nullptr;
      data.vocab = corpus::Vocabulary::build(s.train, cfg.min_count, cat);
      data.roles = corpus::RoleSet::build(all);
      if (cat) data.catalog = *cat;
    }
    auto h = std::make_unique<masko_model>();
    const Checkpoint* pre = ckpt ? &*ckpt : nullptr;
    downstream::FinetuneOptions opt;
    opt.epochs = cfg.epochs;
    opt.seed = cfg.seed;
    opt.eval_every_epoch = true;
    h->adam = make_adam(cfg);
    downstream::FinetuneResult r;
    if (kind == ModelKind::kClassify) {
      data.labels = downstream::collect_labels(all);
      h->model = downstream::init_classification(cfg, std::move(data), cfg.seed, pre);
      r = downstream::finetune_classification(h->model, *h->adam, s.train, s.heldout, opt);
    } else {
      h->model = downstream::init_generation(cfg, std::move(data), cfg.seed, pre);
      r = downstream::finetune_generation(h->model, *h->adam, s.train, s.heldout, opt);
    }
    json epochs = json::array();
    for (const auto& e : r.epochs) {
      epochs.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"heldout", e.heldout->to_json()}});
    }
    json report = {{"config", cfg.to_json()},
                   {"task", task},
                   {"init", h->model.init},
                   {"train_dialogues", s.train.size()},
                   {"heldout_dialogues", s.heldout.size()},
                   {"steps", r.steps},
                   {"loss_trace", r.loss_trace},
                   {"epochs", epochs},
                   {"report", r.report.to_json()}};
    put(out_report_json, report);
    *out_model = h.release();
  });
}

masko_status masko_evaluate(masko_model* model, const masko_corpus* corpus, int all, char** out_report_json) {
  return guarded([&] {
    require(model, "model");
    require(corpus, "corpus");
    require(out_report_json, "out_report_json");
    Model& m = model->model;
    const auto dialogues = capped(*corpus, m.config);
    std::vector<corpus::Dialogue> chosen;
    for (const auto& d : dialogues) {
      if (all || corpus::split_of(d.id) != corpus::Split::kTrain) chosen.push_back(d);
    }
    if (chosen.empty()) fail(ErrorCode::kInvalidArgument, "no dialogues to evaluate");
    for (const auto& d : chosen) {
      for (const auto& u : d.utterances) {
        if (!m.roles.contains(u.role)) {
          fail(ErrorCode::kInvalidArgument, "dialogue " + d.id + ": role \"" + u.role + "\" is unknown to the model");
        }
      }
    }
    json j = {{"task", to_string(m.kind)}, {"dialogues", chosen.size()}, {"metrics", eval_json(m, chosen)}};
    put(out_report_json, j);
  });
}

masko_status masko_model_load(const char* path, masko_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    if (!std::filesystem::exists(path)) fail(ErrorCode::kIo, std::string("no such checkpoint: ") + path);
    auto h = std::make_unique<masko_model>();
    try {
      const Checkpoint ckpt = read_checkpoint(path);
      h->model = downstream::load_model(ckpt);
      if (ckpt.optimizer) {
        h->adam = make_adam(h->model.config);
        restore_optimizer(*h->adam, ckpt);
      }
    } catch (const Error& e) {
      throw Corrupt{std::string(path) + ": " + e.what()};
    } catch (const json::exception& e) {
      throw Corrupt{std::string(path) + ": " + e.what()};
    }
    *out = h.release();
  });
}

masko_status masko_model_save(const masko_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(path, model->model.to_checkpoint(model->adam ? &*model->adam : nullptr));
  });
}

masko_status masko_model_info(const masko_model* model, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    const Model& m = model->model;
    std::size_t scalars = 0;
    for (const auto& [name, p] : m.params) scalars += p.value.size();
    put(out_json, {{"kind", to_string(m.kind)},
                   {"init", m.init},
                   {"seed", m.seed},
                   {"objectives", m.objectives.to_string()},
                   {"config", m.config.to_json()},
                   {"vocab_size", m.vocab.size()},
                   {"roles", m.roles.names()},
                   {"labels", m.labels},
                   {"references", m.reference_count()},
                   {"tensors", m.params.size()},
                   {"parameters", scalars},
                   {"optimizer_state", model->adam.has_value()}});
  });
}

void masko_model_free(masko_model* model) { delete model; }

}  // extern "C"
