// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/encoder.hpp"

#include "masko/error.hpp"

namespace masko::encoder {

ModelDims ModelDims::from_config(const RunConfig& cfg, std::size_t vocab_size, std::size_t role_count) {
  ModelDims d;
  d.word_emb_dim = cfg.word_emb_dim;
  d.role_emb_dim = cfg.role_emb_dim;
  d.hidden_dim = cfg.hidden_dim;
  d.transformer_layers = cfg.transformer_layers;
  d.ff_dim = cfg.ff_dim;
  d.heads = cfg.heads;
  d.use_knowledge = cfg.use_knowledge;
  d.vocab_size = vocab_size;
  d.role_count = role_count;
  d.t_max = cfg.t_max;
  d.activation = cfg.activation_fn();
  d.dropout = cfg.dropout;
  d.validate();
  return d;
}

void ModelDims::validate() const {
  if (word_emb_dim == 0 || role_emb_dim == 0 || hidden_dim == 0 || ff_dim == 0) {
    fail(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  }
  if (heads == 0 || width() % heads != 0) {
    fail(ErrorCode::kInvalidArgument, "2 * hidden_dim must be divisible by heads");
  }
  if (vocab_size <= corpus::special::kReservedTokens) {
    fail(ErrorCode::kInvalidArgument, "vocabulary has no ordinary tokens");
  }
  if (role_count <= corpus::special::kReservedRoles) fail(ErrorCode::kInvalidArgument, "role set is empty");
}

void add_encoder_parameters(ParameterStore& store, const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  const std::size_t H = dims.hidden_dim, W = dims.width();
  auto& word = store.add("embed.word", glorot_uniform({dims.vocab_size, dims.word_emb_dim}, seed, "embed.word"));
  for (auto& v : word.value.row(corpus::special::kPad)) v = 0.0;
  word.frozen_rows = {corpus::special::kPad};
  auto& role = store.add("embed.role", glorot_uniform({dims.role_count, dims.role_emb_dim}, seed, "embed.role"));
  for (auto& v : role.value.row(corpus::special::kPadRole)) v = 0.0;
  role.frozen_rows = {corpus::special::kPadRole};

  const std::size_t e = dims.word_emb_dim + dims.role_emb_dim;
  nn::add_lstm_parameters(store, "encoder.utterance_lstm.fwd", e, H, seed);
  nn::add_lstm_parameters(store, "encoder.utterance_lstm.bwd", e, H, seed);
  store.add("encoder.utterance_attn.q", glorot_uniform({W}, seed, "encoder.utterance_attn.q"));
  nn::add_lstm_parameters(store, "encoder.dialogue_lstm.fwd", W, H, seed);
  nn::add_lstm_parameters(store, "encoder.dialogue_lstm.bwd", W, H, seed);
  for (std::size_t k = 0; k < dims.transformer_layers; ++k) {
    nn::add_transformer_parameters(store, "encoder.transformer." + std::to_string(k), W, dims.ff_dim, seed);
  }
  if (dims.use_knowledge) {
    nn::add_lstm_parameters(store, "encoder.reference_lstm.fwd", dims.word_emb_dim, H, seed);
    nn::add_lstm_parameters(store, "encoder.reference_lstm.bwd", dims.word_emb_dim, H, seed);
    store.add("encoder.knowledge_attn.q", glorot_uniform({W, W}, seed, "encoder.knowledge_attn.q"));
  }
}

EncoderWeights bind_encoder(Tape& tape, ParameterStore& store, const ModelDims& dims) {
  EncoderWeights w;
  w.word_emb = tape.parameter(store.get("embed.word"));
  w.role_emb = tape.parameter(store.get("embed.role"));
  if (w.word_emb.rows() != dims.vocab_size || w.role_emb.rows() != dims.role_count) {
    fail(ErrorCode::kShapeMismatch, "embedding tables disagree with the model dimensions");
  }
  w.utt_fwd = nn::bind_lstm(tape, store, "encoder.utterance_lstm.fwd");
  w.utt_bwd = nn::bind_lstm(tape, store, "encoder.utterance_lstm.bwd");
  w.q_u = tape.parameter(store.get("encoder.utterance_attn.q"));
  w.dlg_fwd = nn::bind_lstm(tape, store, "encoder.dialogue_lstm.fwd");
  w.dlg_bwd = nn::bind_lstm(tape, store, "encoder.dialogue_lstm.bwd");
  for (std::size_t k = 0; k < dims.transformer_layers; ++k) {
    w.blocks.push_back(nn::bind_transformer(tape, store, "encoder.transformer." + std::to_string(k)));
  }
  if (dims.use_knowledge) {
    w.ref_fwd = nn::bind_lstm(tape, store, "encoder.reference_lstm.fwd");
    w.ref_bwd = nn::bind_lstm(tape, store, "encoder.reference_lstm.bwd");
    w.q_c = tape.parameter(store.get("encoder.knowledge_attn.q"));
  }
  return w;
}

Pooled attention_pool(Var x, Var q) {
  Var scores = ops::transpose(ops::matmul_bt(x, q));  // 1 x rows
  Var alpha = ops::softmax_rows(scores);
  return {ops::matmul(alpha, x), alpha.value()};
}

UtteranceEncoding encode_utterance(Tape& tape, const EncoderWeights& w, const ModelDims& dims,
                                   const std::vector<TokenId>& tokens, RoleId role) {
  if (tokens.empty()) fail(ErrorCode::kInvalidArgument, "utterance has no tokens");
  for (TokenId t : tokens) {
    if (t >= dims.vocab_size) fail(ErrorCode::kInvalidArgument, "token id " + std::to_string(t) + " out of range");
  }
  if (role >= dims.role_count) fail(ErrorCode::kInvalidArgument, "role id " + std::to_string(role) + " out of range");
  const std::vector<std::size_t> roles(tokens.size(), role);
  Var parts[] = {ops::gather_rows(w.word_emb, tokens), ops::gather_rows(w.role_emb, roles)};
  Var e = ops::concat_cols(parts);
  if (tape.training() && dims.dropout > 0.0) e = ops::dropout(e, dims.dropout);
  Var h = nn::bilstm(e, w.utt_fwd, w.utt_bwd);
  Pooled p = attention_pool(h, w.q_u);
  return {h, p.pooled, std::move(p.alpha)};
}

ContextEncoding encode_context(const EncoderWeights& w, const ModelDims& dims, Var u) {
  ContextEncoding out;
  out.u_bar = nn::bilstm(u, w.dlg_fwd, w.dlg_bwd);
  Var x = out.u_bar;
  const double rate = u.tape->training() ? dims.dropout : 0.0;
  for (const auto& block : w.blocks) {
    auto r = nn::transformer_block(x, block, dims.heads, 1e-5, rate);
    x = r.out;
    out.block_weights.push_back(std::move(r.head_weights));
  }
  out.u_tilde = x;
  return out;
}

Var encode_reference_content(Tape& tape, const EncoderWeights& w, const ModelDims& dims,
                             const std::vector<TokenId>& content) {
  (void)tape;
  if (!w.ref_fwd) fail(ErrorCode::kState, "reference encoder requires knowledge mode");
  if (content.empty()) fail(ErrorCode::kInvalidArgument, "knowledge mode needs non-empty reference content");
  for (TokenId t : content) {
    if (t >= dims.vocab_size) fail(ErrorCode::kInvalidArgument, "reference token id out of range");
  }
  // Same table as the dialogue words.
  Var e = ops::gather_rows(w.word_emb, content);
  return nn::bilstm(e, *w.ref_fwd, *w.ref_bwd);
}

KnowledgeAttention knowledge_attend(Var u_tilde, Var h_ref, Var q_c) {
  Var scores = ops::matmul_bt(ops::matmul(u_tilde, q_c), h_ref);  // L x t
  Var alpha = ops::softmax_rows(scores);
  return {ops::matmul(alpha, h_ref), alpha.value()};
}

DialogueEncoding encode_full(Tape& tape, const EncoderWeights& w, const ModelDims& dims, const EncoderInput& input,
                             const std::vector<TokenId>* content) {
  if (input.tokens.empty()) fail(ErrorCode::kInvalidArgument, "dialogue has no utterances");
  if (input.tokens.size() != input.roles.size()) {
    fail(ErrorCode::kShapeMismatch, "utterance and role counts differ");
  }
  DialogueEncoding enc;
  std::vector<Var> us;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < input.tokens.size(); ++i) {
    auto ue = encode_utterance(tape, w, dims, input.tokens[i], input.roles[i]);
    enc.offsets.push_back(offset);
    offset += input.tokens[i].size();
    enc.h.push_back(ue.h);
    us.push_back(ue.u);
    enc.alpha_u.push_back(std::move(ue.alpha));
  }
  enc.h_all = enc.h.size() == 1 ? enc.h[0] : ops::concat_rows(enc.h);
  enc.u = us.size() == 1 ? us[0] : ops::concat_rows(us);
  auto ctx = encode_context(w, dims, enc.u);
  enc.u_bar = ctx.u_bar;
  enc.u_tilde = ctx.u_tilde;
  enc.block_weights = std::move(ctx.block_weights);
  enc.features = enc.u_tilde;
  if (dims.use_knowledge) {
    if (content == nullptr) fail(ErrorCode::kInvalidArgument, "knowledge mode needs reference content");
    enc.h_ref = encode_reference_content(tape, w, dims, *content);
    auto ka = knowledge_attend(enc.u_tilde, *enc.h_ref, *w.q_c);
    enc.c_bar = ka.c_bar;
    enc.alpha_c = std::move(ka.alpha);
    Var parts[] = {enc.u_tilde, *enc.c_bar};
    enc.features = ops::concat_cols(parts);
  }
  return enc;
}

}  // namespace masko::encoder
