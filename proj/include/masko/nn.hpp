// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "masko/autograd.hpp"

namespace masko::nn {

// Gate layout along the 4H axis: input, forget, candidate, output.
struct LstmWeights {
  Var w_ih;  // in x 4H
  Var w_hh;  // H x 4H
  Var bias;  // 1 x 4H
  std::size_t hidden() const { return w_hh.rows(); }
};

struct LstmState {
  Var h;  // 1 x H
  Var c;  // 1 x H
};

struct LstmSequence {
  Var h;  // T x H, row t is the state after consuming input t
  Var c;  // T x H
};

// Runs the cell over every row of `x` (reversed when `reverse`), starting
// from `init` or zeros.
LstmSequence lstm_sequence(Var x, const LstmWeights& w, bool reverse = false,
                           std::optional<LstmState> init = std::nullopt);

LstmState lstm_step(Var x, const LstmState& prev, const LstmWeights& w);

// [forward ; backward] states, T x 2H.
Var bilstm(Var x, const LstmWeights& fwd, const LstmWeights& bwd);

// Parameter naming for an LSTM under `prefix` ("<prefix>.w_ih" etc.).
void add_lstm_parameters(ParameterStore& store, const std::string& prefix, std::size_t input,
                         std::size_t hidden, std::uint64_t seed);
LstmWeights bind_lstm(Tape& tape, ParameterStore& store, const std::string& prefix);

struct AttentionWeights {
  // Keys carry no bias: it would shift every score in a row equally.
  Var wq, bq, wk, wv, bv, wo, bo;
};

struct TransformerWeights {
  AttentionWeights attn;
  Var ln1_gain, ln1_bias;
  Var ff_w1, ff_b1, ff_w2, ff_b2;
  Var ln2_gain, ln2_bias;
};

struct AttentionOutput {
  Var out;                                    // L x d
  std::vector<Tensor> head_weights;           // per head, L x L
};

// Scaled dot-product multi-head self-attention over the rows of `x`.
AttentionOutput multi_head_attention(Var x, const AttentionWeights& w, std::size_t heads);

struct TransformerOutput {
  Var out;
  std::vector<Tensor> head_weights;
};

// Post-norm encoder block: LN(x + MHA(x)), then LN(h + FFN(h)) with a ReLU
// feed-forward layer.
TransformerOutput transformer_block(Var x, const TransformerWeights& w, std::size_t heads,
                                    double ln_eps = 1e-5, double dropout = 0.0);

void add_transformer_parameters(ParameterStore& store, const std::string& prefix, std::size_t d,
                                std::size_t ff_dim, std::uint64_t seed);
TransformerWeights bind_transformer(Tape& tape, ParameterStore& store, const std::string& prefix);

}  // namespace masko::nn
