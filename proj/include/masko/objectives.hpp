// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "masko/encoder.hpp"
#include "masko/masking.hpp"
#include "masko/model.hpp"
#include "masko/optim.hpp"

namespace masko::objectives {

using corpus::TokenId;
using encoder::DialogueEncoding;
using encoder::ModelDims;
using masking::PretrainInstance;

// heads.* for W.P., R.P., F.P. and decoder.* for S.G., created only for the
// enabled objectives. `references` is the catalog size M.
void add_pretraining_heads(ParameterStore& store, const ModelDims& dims, const ObjectiveSet& objectives,
                           std::size_t references, std::uint64_t seed);
void add_decoder_parameters(ParameterStore& store, const ModelDims& dims, std::uint64_t seed);

struct WordHead {
  Var v, b, out_w, out_b;
};
struct RoleHead {
  Var v, b, out_w, out_b;
};
struct ReferenceHead {
  Var q, v, b, out_w, out_b;
};

// Shares its input embeddings with embed.word.
struct DecoderWeights {
  Var word_emb;
  Var init_w, init_b;
  nn::LstmWeights lstm;
  Var attn_w;  // general attention score sᵀ W m
  Var combine_w, combine_b;
  Var out_w, out_b;
};

WordHead bind_word_head(Tape& tape, ParameterStore& store);
RoleHead bind_role_head(Tape& tape, ParameterStore& store);
ReferenceHead bind_reference_head(Tape& tape, ParameterStore& store);
DecoderWeights bind_decoder(Tape& tape, ParameterStore& store);

struct HeadLoss {
  Var loss;
  Tensor logits;  // one row per supervised position
};

HeadLoss word_prediction_loss(const DialogueEncoding& enc, const PretrainInstance& inst, const WordHead& w,
                              ops::Activation g);
HeadLoss role_prediction_loss(const DialogueEncoding& enc, const PretrainInstance& inst, const RoleHead& w,
                              ops::Activation g);

struct ReferenceLoss {
  Var loss;
  Tensor logits;         // 1 x M
  Tensor probabilities;  // 1 x M
  Tensor alpha;          // pooling weights over utterances, 1 x L
};
ReferenceLoss reference_prediction_loss(const DialogueEncoding& enc, const std::vector<int>& labels,
                                        const ReferenceHead& w, ops::Activation g);

struct DecoderLoss {
  Var loss;
  Tensor logits;     // (K - 1) x N_w, one row per predicted token
  Tensor attention;  // (K - 1) x L
};

// Teacher forcing over `target` = [BOS] ... [EOS]: the loss sums the K - 1
// next-token cross-entropies. Memory rows are the per-utterance features and
// `init_source` (1 x F) seeds the initial hidden state.
DecoderLoss decoder_loss(const DecoderWeights& w, Var memory, Var init_source, const std::vector<TokenId>& target);

struct GreedyDecode {
  std::vector<TokenId> tokens;  // without [BOS] / [EOS]
  std::vector<Tensor> attention;
};
GreedyDecode decode_greedy(const DecoderWeights& w, Var memory, Var init_source, std::size_t max_len);

HeadLoss sentence_generation_loss(const DialogueEncoding& enc, const PretrainInstance& inst,
                                  const DecoderWeights& w);

struct LossWeights {
  double word = 1.0, role = 1.0, sentence = 1.0, reference = 1.0;
  bool normalize = false;  // divide each sum by its number of terms
  static LossWeights from_config(const RunConfig& cfg);
};

struct PretrainLosses {
  std::optional<double> l_w, l_r, l_s, l_f;
  double total = 0.0;
  nlohmann::json to_json() const;
};

struct PretrainForward {
  PretrainLosses losses;
  Var total;
  DialogueEncoding encoding;
  std::optional<Tensor> word_logits, role_logits, reference_probabilities;
  std::optional<Tensor> reference_alpha, decoder_attention;
};

// Encodes the instance and evaluates every enabled objective of the model.
PretrainForward forward_pretraining(Tape& tape, Model& model, const PretrainInstance& inst);

// Builds an initialized pretraining model.
Model make_pretraining_model(const RunConfig& cfg, corpus::Vocabulary vocab, corpus::RoleSet roles,
                             const corpus::ReferenceCatalog* catalog, std::uint64_t seed);

masking::MaskingConfig masking_config(const Model& model, std::uint64_t seed);

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double mean_total = 0.0;
  PretrainLosses mean;
};

struct PretrainResult {
  std::vector<double> loss_trace;  // mean L^total per dialogue, per epoch
  std::vector<EpochReport> epochs;
  std::uint64_t steps = 0;
};

// One Adam step per dialogue (or per grad_accumulation dialogues). Throws
// kDivergence on a non-finite loss, naming the epoch, step and dialogue.
PretrainResult pretrain(Model& model, Adam& adam, const std::vector<corpus::Dialogue>& dialogues, std::size_t epochs,
                        std::uint64_t seed, const std::function<void(const EpochReport&)>& on_epoch = {});

struct PretrainMetrics {
  std::optional<double> word_accuracy, role_accuracy, sentence_bleu, reference_accuracy;
  std::size_t word_masks = 0, role_masks = 0, sentences = 0, reference_bits = 0;
  std::vector<double> loss_trace;
  nlohmann::json to_json() const;
};

// Masks are drawn with (seed, epoch 0) so repeated evaluations agree.
PretrainMetrics evaluate_pretraining(Model& model, const std::vector<corpus::Dialogue>& dialogues,
                                     std::uint64_t seed);

}  // namespace masko::objectives
