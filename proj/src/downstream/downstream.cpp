// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "masko/error.hpp"
#include "masko/log.hpp"
#include "masko/masking.hpp"
#include "masko/objectives.hpp"

namespace masko::downstream {

using corpus::Dialogue;
using corpus::TokenId;
using corpus::special::kBos;
using corpus::special::kEos;
using corpus::special::kUnk;

namespace {

bool has_prefix(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }
bool is_encoder(const std::string& name) { return has_prefix(name, "embed.") || has_prefix(name, "encoder."); }
bool is_decoder(const std::string& name) { return has_prefix(name, "decoder."); }

void add_classifier(ParameterStore& store, const encoder::ModelDims& dims, std::size_t classes, std::uint64_t seed) {
  const std::size_t W = dims.width(), F = dims.feature_width();
  store.add("classifier.fc.w", glorot_uniform({F, W}, seed, "classifier.fc.w"));
  store.add("classifier.fc.b", Tensor({W}));
  store.add("classifier.out.w", glorot_uniform({W, classes}, seed, "classifier.out.w"));
  store.add("classifier.out.b", Tensor({classes}));
}

void copy_tensor(Parameter& p, const Checkpoint& ckpt) {
  const Tensor* t = ckpt.find(p.name);
  if (t == nullptr) fail(ErrorCode::kMissingParameter, "checkpoint has no tensor " + p.name);
  if (t->shape() != p.value.shape()) {
    fail(ErrorCode::kShapeMismatch, "tensor " + p.name + ": checkpoint shape " + shape_to_string(t->shape()) +
                                        ", model shape " + shape_to_string(p.value.shape()));
  }
  p.value = *t;
}

// Encoder tensors must match one-to-one; decoder tensors are optional as a
// group.
void transfer(Model& m, const Checkpoint& ckpt, bool with_decoder) {
  for (const auto& [name, t] : ckpt.tensors) {
    if (is_encoder(name) && !m.params.contains(name)) {
      fail(ErrorCode::kUnknownParameter, "checkpoint tensor " + name + " has no counterpart in the model");
    }
  }
  bool decoder_present = false;
  for (const auto& [name, t] : ckpt.tensors) decoder_present = decoder_present || is_decoder(name);
  if (with_decoder && !decoder_present) {
    warn("checkpoint has no decoder tensors (pretrained without sentence generation); decoder initialized randomly");
  }
  for (auto& [name, p] : m.params) {
    if (is_encoder(name) || (with_decoder && decoder_present && is_decoder(name))) copy_tensor(p, ckpt);
  }
}

Model make_shell(ModelKind kind, const RunConfig& cfg, TaskData& data, std::uint64_t seed, const Checkpoint* ckpt) {
  Model m;
  m.kind = kind;
  init_model_shell(m, cfg, std::move(data.vocab), std::move(data.roles), data.catalog ? &*data.catalog : nullptr);
  m.objectives = cfg.objective_set();
  m.seed = seed;
  m.init = ckpt ? "pretrain" : "vanilla";
  encoder::add_encoder_parameters(m.params, m.dims, seed);
  return m;
}

// Knowledge mode collapses catalog names to [MASK_REF] as in pretraining,
// so fine-tuning sees the same input distribution.
encoder::EncoderInput encode_input(const Model& m, const Dialogue& d) {
  auto e = masking::encode_dialogue(d, m.vocab, m.roles);
  if (m.dims.use_knowledge && m.catalog) {
    std::vector<std::vector<TokenId>> names;
    for (std::size_t k = 0; k < m.catalog->size(); ++k) {
      auto ids = m.vocab.encode(m.catalog->name_tokens(k));
      if (std::find(ids.begin(), ids.end(), kUnk) == ids.end()) names.push_back(std::move(ids));
    }
    for (auto& toks : e.tokens) toks = masking::substitute_references(toks, names);
  }
  return {std::move(e.tokens), std::move(e.roles)};
}

std::size_t label_index(const Model& m, const Dialogue& d, std::size_t i) {
  const auto& label = d.utterances[i].label;
  if (!label) {
    fail(ErrorCode::kInvalidArgument,
         "dialogue " + d.id + ": utterance " + std::to_string(i) + " has no label");
  }
  auto it = std::find(m.labels.begin(), m.labels.end(), *label);
  if (it == m.labels.end()) {
    fail(ErrorCode::kInvalidArgument, "dialogue " + d.id + ": label \"" + *label + "\" is not in the model's label set");
  }
  return static_cast<std::size_t>(it - m.labels.begin());
}

std::vector<TokenId> summary_target(const Model& m, const Dialogue& d) {
  if (!d.summary) fail(ErrorCode::kInvalidArgument, "dialogue " + d.id + " has no summary");
  std::vector<TokenId> t{kBos};
  auto ids = m.vocab.encode(*d.summary);
  t.insert(t.end(), ids.begin(), ids.end());
  t.push_back(kEos);
  return t;
}

Var classifier_logits(Tape& tape, Model& m, const encoder::DialogueEncoding& enc) {
  auto& p = m.params;
  Var h = ops::activate(ops::affine(enc.features, tape.parameter(p.get("classifier.fc.w")),
                                    tape.parameter(p.get("classifier.fc.b"))),
                        m.dims.activation);
  return ops::affine(h, tape.parameter(p.get("classifier.out.w")), tape.parameter(p.get("classifier.out.b")));
}

encoder::DialogueEncoding encode(Tape& tape, Model& m, const Dialogue& d) {
  auto w = encoder::bind_encoder(tape, m.params, m.dims);
  return encoder::encode_full(tape, w, m.dims, encode_input(m, d), m.content_ptr());
}

// Mean of the utterance features seeds the decoder state.
Var init_source(const encoder::DialogueEncoding& enc) { return ops::mean_rows(enc.features); }

Var dialogue_loss(Tape& tape, Model& m, const Dialogue& d) {
  auto enc = encode(tape, m, d);
  if (m.kind == ModelKind::kClassify) {
    std::vector<std::size_t> targets(d.utterances.size());
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = label_index(m, d, i);
    return ops::cross_entropy_rows(classifier_logits(tape, m, enc), targets);
  }
  auto dw = objectives::bind_decoder(tape, m.params);
  return objectives::decoder_loss(dw, enc.features, init_source(enc), summary_target(m, d)).loss;
}

void require_kind(const Model& m, ModelKind kind) {
  if (m.kind != kind) {
    fail(ErrorCode::kInvalidArgument, std::string("expected a ") + to_string(kind) + " model, got " + to_string(m.kind));
  }
}

FinetuneResult finetune(Model& model, Adam& adam, const std::vector<Dialogue>& train,
                        const std::vector<Dialogue>& heldout, const FinetuneOptions& opt) {
  if (train.empty()) fail(ErrorCode::kInvalidArgument, "fine-tuning corpus is empty");
  // Validate up front so a bad record fails before any update.
  for (const auto* set : {&train, &heldout}) {
    for (const auto& d : *set) {
      if (model.kind == ModelKind::kClassify) {
        for (std::size_t i = 0; i < d.utterances.size(); ++i) label_index(model, d, i);
      } else {
        summary_target(model, d);
      }
    }
  }
  if (adam.moments().empty()) adam.init(model.params);
  const std::size_t accum = model.config.grad_accumulation;
  FinetuneResult result;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(opt.seed, fnv1a64("order"), epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(shuffle, i)]);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t pending = 0;
    model.params.zero_grad();
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& d = train[order[k]];
      Tape tape;
      tape.set_training(model.dims.dropout > 0.0, derive_seed(opt.seed, epoch, k));
      Var loss = dialogue_loss(tape, model, d);
      if (!std::isfinite(loss.scalar())) {
        fail(ErrorCode::kDivergence, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                         std::to_string(result.steps + 1) + " (dialogue " + d.id + ")");
      }
      tape.backward(loss);
      rec.mean_loss += loss.scalar();
      if (++pending == accum || k + 1 == order.size()) {
        adam.step(model.params);
        model.params.zero_grad();
        pending = 0;
        ++result.steps;
      }
    }
    rec.mean_loss /= static_cast<double>(train.size());
    if (opt.eval_every_epoch && !heldout.empty()) rec.heldout = evaluate(model, heldout);
    result.loss_trace.push_back(rec.mean_loss);
    result.epochs.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(result.epochs.back());
  }
  if (!heldout.empty()) {
    result.report = !result.epochs.empty() && result.epochs.back().heldout ? *result.epochs.back().heldout
                                                                           : evaluate(model, heldout);
  }
  return result;
}

}  // namespace

const char* to_string(InitMode mode) { return mode == InitMode::kPretrain ? "pretrain" : "vanilla"; }

TaskData TaskData::from_checkpoint(const Checkpoint& ckpt) {
  Model shell = model_shell_from_checkpoint(ckpt);
  return {std::move(shell.vocab), std::move(shell.roles), std::move(shell.catalog), std::move(shell.labels)};
}

std::vector<std::string> collect_labels(const std::vector<Dialogue>& dialogues) {
  std::set<std::string> out;
  for (const auto& d : dialogues) {
    for (const auto& u : d.utterances) {
      if (u.label) out.insert(*u.label);
    }
  }
  return {out.begin(), out.end()};
}

Model init_classification(const RunConfig& cfg, TaskData data, std::uint64_t seed, const Checkpoint* pretrained) {
  if (data.labels.size() < 2) fail(ErrorCode::kInvalidArgument, "classification needs at least 2 labels");
  std::vector<std::string> labels = std::move(data.labels);
  Model m = make_shell(ModelKind::kClassify, cfg, data, seed, pretrained);
  m.labels = std::move(labels);
  add_classifier(m.params, m.dims, m.labels.size(), seed);
  if (pretrained) transfer(m, *pretrained, false);
  return m;
}

Model init_generation(const RunConfig& cfg, TaskData data, std::uint64_t seed, const Checkpoint* pretrained) {
  Model m = make_shell(ModelKind::kGenerate, cfg, data, seed, pretrained);
  objectives::add_decoder_parameters(m.params, m.dims, seed);
  if (pretrained) transfer(m, *pretrained, true);
  return m;
}

Model load_model(const Checkpoint& ckpt) {
  Model m = model_shell_from_checkpoint(ckpt);
  switch (m.kind) {
    case ModelKind::kPretrain:
      encoder::add_encoder_parameters(m.params, m.dims, m.seed);
      objectives::add_pretraining_heads(m.params, m.dims, m.objectives, m.reference_count(), m.seed);
      break;
    case ModelKind::kClassify:
      if (m.labels.size() < 2) fail(ErrorCode::kParse, "classification checkpoint has fewer than 2 labels");
      encoder::add_encoder_parameters(m.params, m.dims, m.seed);
      add_classifier(m.params, m.dims, m.labels.size(), m.seed);
      break;
    case ModelKind::kGenerate:
      encoder::add_encoder_parameters(m.params, m.dims, m.seed);
      objectives::add_decoder_parameters(m.params, m.dims, m.seed);
      break;
  }
  load_parameters(m.params, ckpt, LoadMode::kStrict);
  return m;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("micro_f1", micro_f1);
  put("macro_f1", macro_f1);
  put("rouge_1", rouge_1);
  put("rouge_2", rouge_2);
  put("rouge_3", rouge_3);
  put("rouge_l", rouge_l);
  put("bleu_4", bleu_4);
  if (micro_f1) {
    nlohmann::json pc = nlohmann::json::object();
    for (const auto& [label, s] : per_class) {
      pc[label] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
    }
    j["per_class"] = pc;
  }
  j["meta"] = meta;
  return j;
}

FinetuneResult finetune_classification(Model& model, Adam& adam, const std::vector<Dialogue>& train,
                                       const std::vector<Dialogue>& heldout, const FinetuneOptions& opt) {
  require_kind(model, ModelKind::kClassify);
  return finetune(model, adam, train, heldout, opt);
}

FinetuneResult finetune_generation(Model& model, Adam& adam, const std::vector<Dialogue>& train,
                                   const std::vector<Dialogue>& heldout, const FinetuneOptions& opt) {
  require_kind(model, ModelKind::kGenerate);
  return finetune(model, adam, train, heldout, opt);
}

std::vector<std::string> classify(Model& model, const Dialogue& d) {
  require_kind(model, ModelKind::kClassify);
  Tape tape;
  auto enc = encode(tape, model, d);
  const Tensor logits = classifier_logits(tape, model, enc).value();
  std::vector<std::string> out;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    out.push_back(model.labels[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())]);
  }
  return out;
}

std::vector<std::string> generate(Model& model, const Dialogue& d, std::size_t max_len) {
  require_kind(model, ModelKind::kGenerate);
  Tape tape;
  auto enc = encode(tape, model, d);
  auto dw = objectives::bind_decoder(tape, model.params);
  auto g = objectives::decode_greedy(dw, enc.features, init_source(enc), max_len);
  std::vector<std::string> out;
  for (auto t : g.tokens) out.push_back(model.vocab.token(t));
  return out;
}

EvalReport evaluate_classification(Model& model, const std::vector<Dialogue>& dialogues) {
  require_kind(model, ModelKind::kClassify);
  if (dialogues.empty()) fail(ErrorCode::kInvalidArgument, "evaluation corpus is empty");
  std::vector<std::string> preds, golds;
  for (const auto& d : dialogues) {
    for (std::size_t i = 0; i < d.utterances.size(); ++i) golds.push_back(model.labels[label_index(model, d, i)]);
    auto p = classify(model, d);
    preds.insert(preds.end(), p.begin(), p.end());
  }
  auto f1 = metrics::micro_macro_f1(preds, golds, model.labels);
  EvalReport r;
  r.micro_f1 = f1.micro;
  r.macro_f1 = f1.macro;
  r.per_class = std::move(f1.per_class);
  r.meta = {{"task", "classify"}, {"init", model.init}, {"seed", model.seed}, {"dialogues", dialogues.size()},
            {"utterances", golds.size()}};
  return r;
}

EvalReport evaluate_generation(Model& model, const std::vector<Dialogue>& dialogues) {
  require_kind(model, ModelKind::kGenerate);
  if (dialogues.empty()) fail(ErrorCode::kInvalidArgument, "evaluation corpus is empty");
  double r1 = 0, r2 = 0, r3 = 0, rl = 0, b4 = 0;
  for (const auto& d : dialogues) {
    summary_target(model, d);
    auto cand = generate(model, d, model.config.max_decode_len);
    const auto& ref = *d.summary;
    r1 += metrics::rouge_n(cand, ref, 1);
    r2 += metrics::rouge_n(cand, ref, 2);
    r3 += metrics::rouge_n(cand, ref, 3);
    rl += metrics::rouge_l(cand, ref);
    b4 += metrics::bleu4(cand, ref);
  }
  const double n = static_cast<double>(dialogues.size());
  EvalReport r;
  r.rouge_1 = r1 / n;
  r.rouge_2 = r2 / n;
  r.rouge_3 = r3 / n;
  r.rouge_l = rl / n;
  r.bleu_4 = b4 / n;
  r.meta = {{"task", "generate"}, {"init", model.init}, {"seed", model.seed}, {"dialogues", dialogues.size()}};
  return r;
}

EvalReport evaluate(Model& model, const std::vector<Dialogue>& dialogues) {
  switch (model.kind) {
    case ModelKind::kClassify: return evaluate_classification(model, dialogues);
    case ModelKind::kGenerate: return evaluate_generation(model, dialogues);
    case ModelKind::kPretrain: break;
  }
  fail(ErrorCode::kInvalidArgument, "pretraining checkpoints are evaluated with the pretraining metrics");
}

}  // namespace masko::downstream
