// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library only through masko.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "masko/masko.h"

using nlohmann::json;

namespace {

// Failure carrying the exit code of the C call that produced it.
struct Exit {
  int code;
  std::string message;
};

void check(masko_status s, const std::string& context) {
  if (s != MASKO_OK) throw Exit{static_cast<int>(s), context + ": " + masko_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  masko_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Exit{MASKO_ERR_INPUT, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Exit{MASKO_ERR_INPUT, "cannot write " + path.string()};
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Exit{MASKO_ERR_INPUT, "cannot create " + dir + ": " + ec.message()};
}

struct Corpus {
  masko_corpus* p = nullptr;
  Corpus(const std::string& path, const std::optional<std::string>& catalog, std::size_t t_max) {
    check(masko_corpus_load(path.c_str(), catalog ? catalog->c_str() : nullptr, t_max, &p), "loading corpus");
  }
  ~Corpus() { masko_corpus_free(p); }
  Corpus(const Corpus&) = delete;
  Corpus& operator=(const Corpus&) = delete;
};

struct ModelHandle {
  masko_model* p = nullptr;
  ModelHandle() = default;
  explicit ModelHandle(const std::string& path) { check(masko_model_load(path.c_str(), &p), "loading " + path); }
  ~ModelHandle() { masko_model_free(p); }
  ModelHandle(const ModelHandle&) = delete;
  ModelHandle& operator=(const ModelHandle&) = delete;
};

// Config file, then --set KEY=VALUE pairs, then dedicated flags.
struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "JSON run config")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override one config key, KEY=VALUE (VALUE parsed as JSON when possible)");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--seed", seed, "Random seed");
  }

  json overrides() const {
    json j = json::object();
    if (!file.empty()) {
      try {
        j = json::parse(read_file(file));
      } catch (const json::exception& e) {
        throw Exit{MASKO_ERR_INPUT, file + ": " + e.what()};
      }
      if (!j.is_object()) throw Exit{MASKO_ERR_INPUT, file + ": expected a JSON object"};
    }
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw Exit{MASKO_ERR_INPUT, "--set expects KEY=VALUE, got " + kv};
      const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      json v = json::parse(value, nullptr, false);
      j[key] = v.is_discarded() ? json(value) : v;
    }
    if (epochs) j["epochs"] = *epochs;
    if (seed) j["seed"] = *seed;
    return j;
  }
};

std::size_t t_max_of(const json& overrides) {
  char* out = nullptr;
  check(masko_config_resolve(nullptr, overrides.dump().c_str(), &out), "resolving run config");
  return json::parse(take(out))["t_max"].get<std::size_t>();
}

void warn_to_stderr(const char* message, void*) { std::fprintf(stderr, "warning: %s\n", message); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task masked pretraining for multi-role dialogue encoders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", masko_version());

  // synth
  auto* synth = app.add_subcommand("synth", "Write a planted-structure synthetic corpus");
  std::string synth_out;
  std::size_t s_dialogues = 100, s_vocab = 200, s_roles = 4, s_topics = 4, s_references = 8;
  double s_skew = 0.9;
  std::uint64_t s_seed = 1;
  bool s_with_refs = false;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--dialogues", s_dialogues, "Number of dialogues")->capture_default_str();
  synth->add_option("--vocab", s_vocab, "Vocabulary size")->capture_default_str();
  synth->add_option("--roles", s_roles, "Number of speaker roles")->capture_default_str();
  synth->add_option("--skew", s_skew, "Chance a phrase comes from the speaker's own block")->capture_default_str();
  synth->add_option("--topics", s_topics, "Number of planted topics")->capture_default_str();
  synth->add_flag("--with-references", s_with_refs, "Also write a reference catalog");
  synth->add_option("--references", s_references, "Catalog size with --with-references")->capture_default_str();
  synth->add_option("--seed", s_seed, "Random seed")->capture_default_str();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Multi-task pretraining");
  std::string p_corpus, p_out;
  std::optional<std::string> p_catalog, p_objectives;
  ConfigFlags p_flags;
  pre->add_option("--corpus", p_corpus, "Corpus JSON-Lines")->required()->check(CLI::ExistingFile);
  pre->add_option("--catalog", p_catalog, "Reference catalog JSON")->check(CLI::ExistingFile);
  pre->add_option("--objectives", p_objectives, "Comma-separated subset of w,r,s,f");
  pre->add_option("--out", p_out, "Output directory")->required();
  p_flags.attach(pre);

  // finetune
  auto* ft = app.add_subcommand("finetune", "Fine-tune a classifier or a summarizer");
  std::string f_task, f_corpus, f_init, f_out;
  std::optional<std::string> f_catalog;
  ConfigFlags f_flags;
  ft->add_option("task", f_task, "classify or generate")->required()->check(CLI::IsMember({"classify", "generate"}));
  ft->add_option("--corpus", f_corpus, "Corpus JSON-Lines")->required()->check(CLI::ExistingFile);
  ft->add_option("--catalog", f_catalog, "Reference catalog JSON (vanilla init only)")->check(CLI::ExistingFile);
  ft->add_option("--init", f_init, "Pretraining checkpoint, or \"vanilla\"")->required();
  ft->add_option("--out", f_out, "Output directory")->required();
  f_flags.attach(ft);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a saved model; report on stdout");
  std::string e_model, e_corpus, e_task;
  bool e_all = false;
  ev->add_option("--model", e_model, "Saved model")->required();
  ev->add_option("--corpus", e_corpus, "Corpus JSON-Lines")->required()->check(CLI::ExistingFile);
  ev->add_option("--task", e_task, "Expected model kind")->check(CLI::IsMember({"pretrain", "classify", "generate"}));
  ev->add_flag("--all", e_all, "Evaluate every dialogue instead of the held-out split");

  // stats
  auto* st = app.add_subcommand("stats", "Corpus statistics on stdout");
  std::string st_corpus;
  st->add_option("--corpus", st_corpus, "Corpus JSON-Lines")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : MASKO_ERR_INPUT;
  }

  masko_set_warning_callback(warn_to_stderr, nullptr);
  try {
    if (*synth) {
      json cfg = {{"dialogues", s_dialogues}, {"vocab_size", s_vocab}, {"roles", s_roles}, {"skew", s_skew},
                  {"topics", s_topics},       {"seed", s_seed},        {"references", s_with_refs ? s_references : 0}};
      char* manifest = nullptr;
      check(masko_synthesize(cfg.dump().c_str(), synth_out.c_str(), &manifest), "synth");
      std::cout << take(manifest);
    } else if (*pre) {
      json cfg = p_flags.overrides();
      if (p_objectives) cfg["objectives"] = *p_objectives;
      if (!p_catalog) {
        const std::string obj = cfg.value("objectives", std::string("w,r,s,f"));
        if (obj.find('f') != std::string::npos) {
          throw Exit{MASKO_ERR_INPUT, "objective f (reference prediction) needs --catalog; pass --objectives w,r,s"};
        }
        cfg["use_knowledge"] = false;
      }
      Corpus corpus(p_corpus, p_catalog, t_max_of(cfg));
      ModelHandle model;
      char* metrics = nullptr;
      check(masko_pretrain(corpus.p, cfg.dump().c_str(), &model.p, &metrics), "pretrain");
      make_dir(p_out);
      const std::string text = take(metrics);
      check(masko_model_save(model.p, (std::filesystem::path(p_out) / "model.msko").c_str()), "saving model");
      write_file(std::filesystem::path(p_out) / "metrics.json", text);
      std::cout << text;
    } else if (*ft) {
      json cfg = f_flags.overrides();
      const bool vanilla = f_init == "vanilla";
      if (!vanilla && f_catalog) throw Exit{MASKO_ERR_INPUT, "--catalog applies to vanilla init only"};
      if (vanilla && !f_catalog) {
        cfg["use_knowledge"] = false;
        if (!cfg.contains("objectives")) cfg["objectives"] = "w,r,s";
      }
      ModelHandle init;
      if (!vanilla) check(masko_model_load(f_init.c_str(), &init.p), "loading " + f_init);
      Corpus corpus(f_corpus, f_catalog, t_max_of(cfg));
      ModelHandle model;
      char* report = nullptr;
      check(masko_finetune(corpus.p, f_task.c_str(), init.p, cfg.dump().c_str(), &model.p, &report), "finetune");
      make_dir(f_out);
      const std::string text = take(report);
      check(masko_model_save(model.p, (std::filesystem::path(f_out) / "model.msko").c_str()), "saving model");
      write_file(std::filesystem::path(f_out) / "report.json", text);
      std::cout << text;
    } else if (*ev) {
      ModelHandle model(e_model);
      char* info = nullptr;
      check(masko_model_info(model.p, &info), "model info");
      const json meta = json::parse(take(info));
      if (!e_task.empty() && meta["kind"] != e_task) {
        throw Exit{MASKO_ERR_INPUT, "model is a " + meta["kind"].get<std::string>() + " model, not " + e_task};
      }
      Corpus corpus(e_corpus, std::nullopt, meta["config"]["t_max"].get<std::size_t>());
      char* report = nullptr;
      check(masko_evaluate(model.p, corpus.p, e_all ? 1 : 0, &report), "eval");
      std::cout << take(report);
    } else if (*st) {
      Corpus corpus(st_corpus, std::nullopt, 1);
      char* stats = nullptr;
      check(masko_corpus_stats(corpus.p, &stats), "stats");
      std::cout << take(stats);
    }
  } catch (const Exit& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return MASKO_ERR_INPUT;
  }
  return 0;
}
