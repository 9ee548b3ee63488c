// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "masko/autograd.hpp"
#include "masko/config.hpp"
#include "masko/corpus.hpp"
#include "masko/nn.hpp"

namespace masko::encoder {

using corpus::RoleId;
using corpus::TokenId;

// Shapes of every tensor follow from these fields alone.
struct ModelDims {
  std::size_t word_emb_dim = 300;
  std::size_t role_emb_dim = 100;
  std::size_t hidden_dim = 256;
  std::size_t transformer_layers = 2;
  std::size_t ff_dim = 1024;
  std::size_t heads = 4;
  bool use_knowledge = true;
  std::size_t vocab_size = 0;  // including reserved ids
  std::size_t role_count = 0;  // including reserved ids
  std::size_t t_max = 256;
  ops::Activation activation = ops::Activation::kTanh;
  double dropout = 0.0;

  static ModelDims from_config(const RunConfig& cfg, std::size_t vocab_size, std::size_t role_count);
  std::size_t width() const { return 2 * hidden_dim; }  // h, U, Ū, Ũ, C̄
  std::size_t feature_width() const { return use_knowledge ? 2 * width() : width(); }
  void validate() const;
};

// Creates embed.* and encoder.* tensors. The [PAD] and [PAD_ROLE] rows are
// zero and frozen.
void add_encoder_parameters(ParameterStore& store, const ModelDims& dims, std::uint64_t seed);

struct EncoderWeights {
  Var word_emb, role_emb;
  nn::LstmWeights utt_fwd, utt_bwd;
  Var q_u;  // 1 x 2H
  nn::LstmWeights dlg_fwd, dlg_bwd;
  std::vector<nn::TransformerWeights> blocks;
  std::optional<nn::LstmWeights> ref_fwd, ref_bwd;
  std::optional<Var> q_c;  // 2H x 2H
};

EncoderWeights bind_encoder(Tape& tape, ParameterStore& store, const ModelDims& dims);

struct UtteranceEncoding {
  Var h;         // l x 2H
  Var u;         // 1 x 2H
  Tensor alpha;  // 1 x l
};

UtteranceEncoding encode_utterance(Tape& tape, const EncoderWeights& w, const ModelDims& dims,
                                   const std::vector<TokenId>& tokens, RoleId role);

struct ContextEncoding {
  Var u_bar;    // L x 2H
  Var u_tilde;  // L x 2H
  std::vector<std::vector<Tensor>> block_weights;  // [layer][head], L x L
};

ContextEncoding encode_context(const EncoderWeights& w, const ModelDims& dims, Var u);

// States over the concatenated catalog content, t x 2H.
Var encode_reference_content(Tape& tape, const EncoderWeights& w, const ModelDims& dims,
                             const std::vector<TokenId>& content);

struct KnowledgeAttention {
  Var c_bar;     // L x 2H
  Tensor alpha;  // L x t
};

KnowledgeAttention knowledge_attend(Var u_tilde, Var h_ref, Var q_c);

struct EncoderInput {
  std::vector<std::vector<TokenId>> tokens;
  std::vector<RoleId> roles;
};

struct DialogueEncoding {
  std::vector<Var> h;  // per utterance, l_i x 2H
  Var h_all;           // all token states stacked
  std::vector<std::size_t> offsets;  // first row of utterance i in h_all
  Var u, u_bar, u_tilde;
  std::optional<Var> c_bar;
  std::optional<Var> h_ref;
  Var features;  // [Ũ ; C̄] per row, or Ũ without knowledge

  std::vector<Tensor> alpha_u;
  std::optional<Tensor> alpha_c;
  std::vector<std::vector<Tensor>> block_weights;

  std::size_t length() const { return h.size(); }
};

// `content` is required in knowledge mode and ignored otherwise.
DialogueEncoding encode_full(Tape& tape, const EncoderWeights& w, const ModelDims& dims, const EncoderInput& input,
                             const std::vector<TokenId>* content);

// Scores each row of `x` against `q` (1 x n) and pools: softmax(x qᵀ)ᵀ x.
struct Pooled {
  Var pooled;    // 1 x n
  Tensor alpha;  // 1 x rows
};
Pooled attention_pool(Var x, Var q);

}  // namespace masko::encoder
