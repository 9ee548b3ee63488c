// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "masko/error.hpp"
#include "masko/metrics.hpp"

namespace masko::objectives {

using corpus::special::kBos;
using corpus::special::kEos;
using corpus::special::kReservedRoles;

namespace {

void add_matrix(ParameterStore& s, const std::string& name, std::size_t r, std::size_t c, std::uint64_t seed) {
  s.add(name, glorot_uniform({r, c}, seed, name));
}
void add_zeros(ParameterStore& s, const std::string& name, std::size_t n) { s.add(name, Tensor({n})); }

Var p(Tape& tape, ParameterStore& store, const std::string& name) { return tape.parameter(store.get(name)); }

std::size_t argmax_row(const Tensor& t, std::size_t r) {
  auto row = t.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Var two_layer(Var x, Var v, Var b, Var out_w, Var out_b, ops::Activation g) {
  return ops::affine(ops::activate(ops::affine(x, v, b), g), out_w, out_b);
}

}  // namespace

void add_pretraining_heads(ParameterStore& store, const ModelDims& dims, const ObjectiveSet& objectives,
                           std::size_t references, std::uint64_t seed) {
  const std::size_t W = dims.width(), F = dims.feature_width();
  if (objectives.word) {
    add_matrix(store, "heads.word.v", W + F, W, seed);
    add_zeros(store, "heads.word.b", W);
    add_matrix(store, "heads.word.out.w", W, dims.vocab_size, seed);
    add_zeros(store, "heads.word.out.b", dims.vocab_size);
  }
  if (objectives.role) {
    const std::size_t classes = dims.role_count - kReservedRoles;
    add_matrix(store, "heads.role.v", F, W, seed);
    add_zeros(store, "heads.role.b", W);
    add_matrix(store, "heads.role.out.w", W, classes, seed);
    add_zeros(store, "heads.role.out.b", classes);
  }
  if (objectives.reference) {
    if (!dims.use_knowledge) fail(ErrorCode::kInvalidArgument, "reference prediction requires knowledge mode");
    if (references == 0) fail(ErrorCode::kInvalidArgument, "reference prediction needs a non-empty catalog");
    store.add("heads.reference.q", glorot_uniform({W}, seed, "heads.reference.q"));
    add_matrix(store, "heads.reference.v", W, W, seed);
    add_zeros(store, "heads.reference.b", W);
    add_matrix(store, "heads.reference.out.w", W, references, seed);
    add_zeros(store, "heads.reference.out.b", references);
  }
  if (objectives.sentence) add_decoder_parameters(store, dims, seed);
}

void add_decoder_parameters(ParameterStore& store, const ModelDims& dims, std::uint64_t seed) {
  const std::size_t W = dims.width(), F = dims.feature_width();
  add_matrix(store, "decoder.init.w", F, W, seed);
  add_zeros(store, "decoder.init.b", W);
  nn::add_lstm_parameters(store, "decoder.lstm", dims.word_emb_dim, W, seed);
  add_matrix(store, "decoder.attn.w", W, F, seed);
  add_matrix(store, "decoder.combine.w", W + F, W, seed);
  add_zeros(store, "decoder.combine.b", W);
  add_matrix(store, "decoder.out.w", W, dims.vocab_size, seed);
  add_zeros(store, "decoder.out.b", dims.vocab_size);
}

WordHead bind_word_head(Tape& t, ParameterStore& s) {
  return {p(t, s, "heads.word.v"), p(t, s, "heads.word.b"), p(t, s, "heads.word.out.w"), p(t, s, "heads.word.out.b")};
}

RoleHead bind_role_head(Tape& t, ParameterStore& s) {
  return {p(t, s, "heads.role.v"), p(t, s, "heads.role.b"), p(t, s, "heads.role.out.w"), p(t, s, "heads.role.out.b")};
}

ReferenceHead bind_reference_head(Tape& t, ParameterStore& s) {
  return {p(t, s, "heads.reference.q"), p(t, s, "heads.reference.v"), p(t, s, "heads.reference.b"),
          p(t, s, "heads.reference.out.w"), p(t, s, "heads.reference.out.b")};
}

DecoderWeights bind_decoder(Tape& t, ParameterStore& s) {
  DecoderWeights w;
  w.word_emb = p(t, s, "embed.word");
  w.init_w = p(t, s, "decoder.init.w");
  w.init_b = p(t, s, "decoder.init.b");
  w.lstm = nn::bind_lstm(t, s, "decoder.lstm");
  w.attn_w = p(t, s, "decoder.attn.w");
  w.combine_w = p(t, s, "decoder.combine.w");
  w.combine_b = p(t, s, "decoder.combine.b");
  w.out_w = p(t, s, "decoder.out.w");
  w.out_b = p(t, s, "decoder.out.b");
  return w;
}

HeadLoss word_prediction_loss(const DialogueEncoding& enc, const PretrainInstance& inst, const WordHead& w,
                              ops::Activation g) {
  if (inst.word_masks.empty()) fail(ErrorCode::kInvalidArgument, "word prediction: no masked words");
  std::vector<std::size_t> token_rows, utt_rows, targets;
  for (const auto& z : inst.word_masks) {
    token_rows.push_back(enc.offsets.at(z.utterance) + z.position);
    utt_rows.push_back(z.utterance);
    targets.push_back(z.target);
  }
  Var parts[] = {ops::gather_rows(enc.h_all, token_rows), ops::gather_rows(enc.features, utt_rows)};
  Var logits = two_layer(ops::concat_cols(parts), w.v, w.b, w.out_w, w.out_b, g);
  return {ops::cross_entropy_rows(logits, targets), logits.value()};
}

HeadLoss role_prediction_loss(const DialogueEncoding& enc, const PretrainInstance& inst, const RoleHead& w,
                              ops::Activation g) {
  if (inst.role_masks.empty()) fail(ErrorCode::kInvalidArgument, "role prediction: no masked roles");
  std::vector<std::size_t> rows, targets;
  for (const auto& r : inst.role_masks) {
    if (r.target < kReservedRoles) fail(ErrorCode::kInvalidArgument, "role prediction: reserved role as target");
    rows.push_back(r.utterance);
    targets.push_back(r.target - kReservedRoles);
  }
  Var logits = two_layer(ops::gather_rows(enc.features, rows), w.v, w.b, w.out_w, w.out_b, g);
  return {ops::cross_entropy_rows(logits, targets), logits.value()};
}

ReferenceLoss reference_prediction_loss(const DialogueEncoding& enc, const std::vector<int>& labels,
                                        const ReferenceHead& w, ops::Activation g) {
  if (!enc.c_bar) fail(ErrorCode::kState, "reference prediction requires knowledge mode");
  auto pooled = encoder::attention_pool(enc.u_tilde, w.q);
  Var logits = two_layer(pooled.pooled, w.v, w.b, w.out_w, w.out_b, g);
  ReferenceLoss out{ops::binary_cross_entropy(logits, labels), logits.value(), logits.value(),
                    std::move(pooled.alpha)};
  for (std::size_t k = 0; k < out.probabilities.size(); ++k) {
    out.probabilities[k] = 1.0 / (1.0 + std::exp(-out.logits[k]));
  }
  return out;
}

namespace {

nn::LstmState initial_state(const DecoderWeights& w, Var init_source) {
  Var h0 = ops::tanh(ops::affine(init_source, w.init_w, w.init_b));
  Var c0 = h0.tape->constant(Tensor::matrix(1, h0.cols()));
  return {h0, c0};
}

// Combines decoder states (rows of s) with attention over memory into logits.
Var attend_and_project(const DecoderWeights& w, Var s, Var memory, Tensor* attention) {
  Var alpha = ops::softmax_rows(ops::matmul_bt(ops::matmul(s, w.attn_w), memory));
  if (attention) *attention = alpha.value();
  Var parts[] = {s, ops::matmul(alpha, memory)};
  Var combined = ops::tanh(ops::affine(ops::concat_cols(parts), w.combine_w, w.combine_b));
  return ops::affine(combined, w.out_w, w.out_b);
}

}  // namespace

DecoderLoss decoder_loss(const DecoderWeights& w, Var memory, Var init_source, const std::vector<TokenId>& target) {
  if (target.size() < 2) fail(ErrorCode::kInvalidArgument, "decoder target needs [BOS] and [EOS]");
  const std::vector<TokenId> inputs(target.begin(), target.end() - 1);
  const std::vector<TokenId> outputs(target.begin() + 1, target.end());
  Var emb = ops::gather_rows(w.word_emb, inputs);
  auto seq = nn::lstm_sequence(emb, w.lstm, false, initial_state(w, init_source));
  DecoderLoss out;
  Var logits = attend_and_project(w, seq.h, memory, &out.attention);
  out.loss = ops::cross_entropy_rows(logits, outputs);
  out.logits = logits.value();
  return out;
}

GreedyDecode decode_greedy(const DecoderWeights& w, Var memory, Var init_source, std::size_t max_len) {
  if (max_len == 0) fail(ErrorCode::kInvalidArgument, "decode: max_len must be at least 1");
  GreedyDecode out;
  nn::LstmState state = initial_state(w, init_source);
  TokenId prev = kBos;
  for (std::size_t step = 0; step < max_len; ++step) {
    const std::vector<std::size_t> row{prev};
    state = nn::lstm_step(ops::gather_rows(w.word_emb, row), state, w.lstm);
    Tensor attn;
    Var logits = attend_and_project(w, state.h, memory, &attn);
    out.attention.push_back(std::move(attn));
    const TokenId next = argmax_row(logits.value(), 0);
    if (next == kEos) break;
    out.tokens.push_back(next);
    prev = next;
  }
  return out;
}

HeadLoss sentence_generation_loss(const DialogueEncoding& enc, const PretrainInstance& inst,
                                  const DecoderWeights& w) {
  const std::vector<std::size_t> m{inst.generation_index};
  auto d = decoder_loss(w, enc.features, ops::gather_rows(enc.features, m), inst.generation_target);
  return {d.loss, std::move(d.logits)};
}

LossWeights LossWeights::from_config(const RunConfig& cfg) {
  return {cfg.weight_word, cfg.weight_role, cfg.weight_sentence, cfg.weight_reference, cfg.normalize_losses};
}

nlohmann::json PretrainLosses::to_json() const {
  nlohmann::json j = {{"total", total}};
  if (l_w) j["l_w"] = *l_w;
  if (l_r) j["l_r"] = *l_r;
  if (l_s) j["l_s"] = *l_s;
  if (l_f) j["l_f"] = *l_f;
  return j;
}

Model make_pretraining_model(const RunConfig& cfg, corpus::Vocabulary vocab, corpus::RoleSet roles,
                             const corpus::ReferenceCatalog* catalog, std::uint64_t seed) {
  Model m;
  m.kind = ModelKind::kPretrain;
  init_model_shell(m, cfg, std::move(vocab), std::move(roles), catalog);
  m.objectives = cfg.objective_set();
  m.seed = seed;
  encoder::add_encoder_parameters(m.params, m.dims, seed);
  add_pretraining_heads(m.params, m.dims, m.objectives, m.reference_count(), seed);
  return m;
}

masking::MaskingConfig masking_config(const Model& model, std::uint64_t seed) {
  return {model.config.word_mask_rate, model.config.role_mask_rate, model.dims.use_knowledge, seed};
}

PretrainForward forward_pretraining(Tape& tape, Model& model, const PretrainInstance& inst) {
  const auto& obj = model.objectives;
  const auto g = model.dims.activation;
  const LossWeights lw = LossWeights::from_config(model.config);
  auto ew = encoder::bind_encoder(tape, model.params, model.dims);
  encoder::EncoderInput input{inst.tokens, inst.roles};
  PretrainForward out{{}, {}, encoder::encode_full(tape, ew, model.dims, input, model.content_ptr()), {}, {}, {}, {},
                      {}};
  std::optional<Var> total;
  auto accumulate = [&](Var loss, double weight, std::size_t terms) {
    double s = weight;
    if (lw.normalize) s /= static_cast<double>(std::max<std::size_t>(terms, 1));
    Var part = s == 1.0 ? loss : ops::scale(loss, s);
    total = total ? ops::add(*total, part) : part;
  };
  if (obj.word) {
    auto r = word_prediction_loss(out.encoding, inst, bind_word_head(tape, model.params), g);
    out.losses.l_w = r.loss.scalar();
    out.word_logits = std::move(r.logits);
    accumulate(r.loss, lw.word, inst.word_masks.size());
  }
  if (obj.role) {
    auto r = role_prediction_loss(out.encoding, inst, bind_role_head(tape, model.params), g);
    out.losses.l_r = r.loss.scalar();
    out.role_logits = std::move(r.logits);
    accumulate(r.loss, lw.role, inst.role_masks.size());
  }
  if (obj.sentence) {
    const std::vector<std::size_t> m{inst.generation_index};
    auto dw = bind_decoder(tape, model.params);
    auto r = decoder_loss(dw, out.encoding.features, ops::gather_rows(out.encoding.features, m),
                          inst.generation_target);
    out.losses.l_s = r.loss.scalar();
    out.decoder_attention = std::move(r.attention);
    accumulate(r.loss, lw.sentence, inst.generation_target.size() - 1);
  }
  if (obj.reference) {
    if (!inst.reference_labels) fail(ErrorCode::kInvalidArgument, "instance has no reference labels");
    auto r = reference_prediction_loss(out.encoding, *inst.reference_labels, bind_reference_head(tape, model.params),
                                       g);
    out.losses.l_f = r.loss.scalar();
    out.reference_probabilities = std::move(r.probabilities);
    out.reference_alpha = std::move(r.alpha);
    accumulate(r.loss, lw.reference, inst.reference_labels->size());
  }
  if (!total) fail(ErrorCode::kInvalidArgument, "no objective enabled");
  out.total = *total;
  out.losses.total = total->scalar();
  return out;
}

PretrainResult pretrain(Model& model, Adam& adam, const std::vector<corpus::Dialogue>& dialogues, std::size_t epochs,
                        std::uint64_t seed, const std::function<void(const EpochReport&)>& on_epoch) {
  if (dialogues.empty()) fail(ErrorCode::kInvalidArgument, "pretraining corpus is empty");
  const auto mcfg = masking_config(model, seed);
  const std::size_t accum = model.config.grad_accumulation;
  if (adam.moments().empty()) adam.init(model.params);
  const corpus::ReferenceCatalog* catalog = model.catalog ? &*model.catalog : nullptr;

  PretrainResult result;
  std::vector<std::size_t> order(dialogues.size());
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(seed, fnv1a64("order"), epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(shuffle, i)]);

    EpochReport report;
    report.epoch = epoch;
    double sw = 0, sr = 0, ss = 0, sf = 0;
    std::size_t pending = 0;
    model.params.zero_grad();
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& d = dialogues[order[k]];
      auto inst = masking::build_pretraining_instance(d, catalog, model.vocab, model.roles, mcfg, epoch);
      Tape tape;
      tape.set_training(model.dims.dropout > 0.0, derive_seed(seed, epoch, k));
      auto fwd = forward_pretraining(tape, model, inst);
      if (!std::isfinite(fwd.losses.total)) {
        fail(ErrorCode::kDivergence, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                         std::to_string(result.steps + 1) + " (dialogue " + d.id + ")");
      }
      tape.backward(fwd.total);
      ++pending;
      if (pending == accum || k + 1 == order.size()) {
        adam.step(model.params);
        model.params.zero_grad();
        pending = 0;
        ++result.steps;
      }
      report.mean_total += fwd.losses.total;
      sw += fwd.losses.l_w.value_or(0.0);
      sr += fwd.losses.l_r.value_or(0.0);
      ss += fwd.losses.l_s.value_or(0.0);
      sf += fwd.losses.l_f.value_or(0.0);
    }
    const double n = static_cast<double>(dialogues.size());
    report.mean_total /= n;
    report.mean.total = report.mean_total;
    const auto& obj = model.objectives;
    if (obj.word) report.mean.l_w = sw / n;
    if (obj.role) report.mean.l_r = sr / n;
    if (obj.sentence) report.mean.l_s = ss / n;
    if (obj.reference) report.mean.l_f = sf / n;
    result.loss_trace.push_back(report.mean_total);
    result.epochs.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  return result;
}

nlohmann::json PretrainMetrics::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (word_accuracy) j["word_prediction"] = {{"accuracy", *word_accuracy}, {"masked", word_masks}};
  if (role_accuracy) j["role_prediction"] = {{"accuracy", *role_accuracy}, {"masked", role_masks}};
  if (sentence_bleu) j["sentence_generation"] = {{"bleu_4", *sentence_bleu}, {"sentences", sentences}};
  if (reference_accuracy) {
    j["reference_prediction"] = {{"accuracy", *reference_accuracy}, {"bits", reference_bits}};
  }
  j["loss_trace"] = loss_trace;
  return j;
}

PretrainMetrics evaluate_pretraining(Model& model, const std::vector<corpus::Dialogue>& dialogues,
                                     std::uint64_t seed) {
  if (dialogues.empty()) fail(ErrorCode::kInvalidArgument, "evaluation corpus is empty");
  const auto mcfg = masking_config(model, seed);
  const corpus::ReferenceCatalog* catalog = model.catalog ? &*model.catalog : nullptr;
  const auto& obj = model.objectives;
  std::size_t w_ok = 0, r_ok = 0, f_ok = 0;
  double bleu = 0.0;
  PretrainMetrics m;
  for (const auto& d : dialogues) {
    auto inst = masking::build_pretraining_instance(d, catalog, model.vocab, model.roles, mcfg, 0);
    Tape tape;
    auto fwd = forward_pretraining(tape, model, inst);
    if (obj.word) {
      for (std::size_t k = 0; k < inst.word_masks.size(); ++k) {
        w_ok += argmax_row(*fwd.word_logits, k) == inst.word_masks[k].target;
      }
      m.word_masks += inst.word_masks.size();
    }
    if (obj.role) {
      for (std::size_t k = 0; k < inst.role_masks.size(); ++k) {
        r_ok += argmax_row(*fwd.role_logits, k) + kReservedRoles == inst.role_masks[k].target;
      }
      m.role_masks += inst.role_masks.size();
    }
    if (obj.reference) {
      const auto& probs = *fwd.reference_probabilities;
      for (std::size_t k = 0; k < probs.size(); ++k) f_ok += (probs[k] >= 0.5 ? 1 : 0) == (*inst.reference_labels)[k];
      m.reference_bits += probs.size();
    }
    if (obj.sentence) {
      auto dw = bind_decoder(tape, model.params);
      const std::vector<std::size_t> row{inst.generation_index};
      auto g = decode_greedy(dw, fwd.encoding.features, ops::gather_rows(fwd.encoding.features, row),
                             model.config.max_decode_len);
      metrics::Sequence cand, ref;
      for (auto t : g.tokens) cand.push_back(model.vocab.token(t));
      for (std::size_t k = 1; k + 1 < inst.generation_target.size(); ++k) {
        ref.push_back(model.vocab.token(inst.generation_target[k]));
      }
      bleu += metrics::bleu4(cand, ref);
      ++m.sentences;
    }
  }
  if (obj.word) m.word_accuracy = static_cast<double>(w_ok) / static_cast<double>(m.word_masks);
  if (obj.role) m.role_accuracy = static_cast<double>(r_ok) / static_cast<double>(m.role_masks);
  if (obj.reference) m.reference_accuracy = static_cast<double>(f_ok) / static_cast<double>(m.reference_bits);
  if (obj.sentence) m.sentence_bleu = bleu / static_cast<double>(m.sentences);
  return m;
}

}  // namespace masko::objectives
