// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/nn.hpp"

#include <cmath>

#include "masko/error.hpp"

namespace masko::nn {
namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

LstmSequence lstm_sequence(Var x, const LstmWeights& w, bool reverse, std::optional<LstmState> init) {
  Tape& tape = *x.tape;
  const Tensor& X = x.value();
  const Tensor& Wih = w.w_ih.value();
  const Tensor& Whh = w.w_hh.value();
  const Tensor& B = w.bias.value();
  const std::size_t T = X.rows(), I = X.cols(), H = Whh.rows(), G = 4 * H;
  if (Wih.rows() != I || Wih.cols() != G || Whh.cols() != G || B.size() != G) {
    fail(ErrorCode::kShapeMismatch, "lstm: input width " + std::to_string(I) +
                                        " or hidden size " + std::to_string(H) +
                                        " inconsistent with weights");
  }
  if (init && (init->h.value().size() != H || init->c.value().size() != H)) {
    fail(ErrorCode::kShapeMismatch, "lstm: initial state width mismatch");
  }

  // Cached activations per time step (indexed by input row).
  std::vector<double> gates(T * G), cells(T * H), tanh_c(T * H);
  Tensor out({T, 2 * H});
  std::vector<double> h(H, 0.0), c(H, 0.0), z(G);
  if (init) {
    std::copy_n(init->h.value().data(), H, h.begin());
    std::copy_n(init->c.value().data(), H, c.begin());
  }
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    for (std::size_t j = 0; j < G; ++j) z[j] = B[j];
    const double* xr = X.data() + t * I;
    for (std::size_t p = 0; p < I; ++p) {
      const double xv = xr[p];
      if (xv == 0.0) continue;
      const double* wr = Wih.data() + p * G;
      for (std::size_t j = 0; j < G; ++j) z[j] += xv * wr[j];
    }
    for (std::size_t p = 0; p < H; ++p) {
      const double hv = h[p];
      if (hv == 0.0) continue;
      const double* wr = Whh.data() + p * G;
      for (std::size_t j = 0; j < G; ++j) z[j] += hv * wr[j];
    }
    double* gt = gates.data() + t * G;
    for (std::size_t j = 0; j < H; ++j) {
      gt[j] = sigm(z[j]);
      gt[H + j] = sigm(z[H + j]);
      gt[2 * H + j] = std::tanh(z[2 * H + j]);
      gt[3 * H + j] = sigm(z[3 * H + j]);
      c[j] = gt[H + j] * c[j] + gt[j] * gt[2 * H + j];
      const double tc = std::tanh(c[j]);
      h[j] = gt[3 * H + j] * tc;
      cells[t * H + j] = c[j];
      tanh_c[t * H + j] = tc;
      out[t * 2 * H + j] = h[j];
      out[t * 2 * H + H + j] = c[j];
    }
  }

  std::vector<Var> inputs = {x, w.w_ih, w.w_hh, w.bias};
  if (init) {
    inputs.push_back(init->h);
    inputs.push_back(init->c);
  }
  const bool has_init = init.has_value();
  Var joint = tape.record(
      std::move(out), inputs,
      [ids = [&] {
         std::vector<std::uint32_t> v;
         for (const Var& in : inputs) v.push_back(in.id);
         return v;
       }(),
       gates = std::move(gates), cells = std::move(cells), tanh_c = std::move(tanh_c), T, I, H, G,
       reverse, has_init](Tape& t, std::uint32_t self) {
        const auto& g = t.grad(self);
        const Tensor& X = t.value(ids[0]);
        const Tensor& Wih = t.value(ids[1]);
        const Tensor& Whh = t.value(ids[2]);
        double* gx = t.needs_grad(ids[0]) ? t.grad(ids[0]).data() : nullptr;
        double* gwih = t.needs_grad(ids[1]) ? t.grad(ids[1]).data() : nullptr;
        double* gwhh = t.needs_grad(ids[2]) ? t.grad(ids[2]).data() : nullptr;
        double* gb = t.needs_grad(ids[3]) ? t.grad(ids[3]).data() : nullptr;
        std::vector<double> h0(H, 0.0), c0(H, 0.0);
        if (has_init) {
          std::copy_n(t.value(ids[4]).data(), H, h0.begin());
          std::copy_n(t.value(ids[5]).data(), H, c0.begin());
        }
        std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dz(G), dh(H), dc(H);
        for (std::size_t s = T; s-- > 0;) {
          const std::size_t ti = reverse ? T - 1 - s : s;
          const bool first = s == 0;
          const std::size_t prev = reverse ? ti + 1 : ti - 1;  // valid only when !first
          const double* h_prev = first ? h0.data() : nullptr;
          std::vector<double> hp;
          if (!first) {
            hp.resize(H);
            for (std::size_t j = 0; j < H; ++j) {
              hp[j] = gates[prev * G + 3 * H + j] * tanh_c[prev * H + j];
            }
            h_prev = hp.data();
          }
          const double* c_prev = first ? c0.data() : cells.data() + prev * H;
          const double* gt = gates.data() + ti * G;
          for (std::size_t j = 0; j < H; ++j) {
            dh[j] = g[ti * 2 * H + j] + dh_next[j];
            const double o = gt[3 * H + j];
            const double tc = tanh_c[ti * H + j];
            dc[j] = g[ti * 2 * H + H + j] + dc_next[j] + dh[j] * o * (1.0 - tc * tc);
            const double ig = gt[j], fg = gt[H + j], cg = gt[2 * H + j];
            dz[j] = dc[j] * cg * ig * (1.0 - ig);
            dz[H + j] = dc[j] * c_prev[j] * fg * (1.0 - fg);
            dz[2 * H + j] = dc[j] * ig * (1.0 - cg * cg);
            dz[3 * H + j] = dh[j] * tc * o * (1.0 - o);
            dc_next[j] = dc[j] * fg;
          }
          for (std::size_t p = 0; p < H; ++p) {
            const double* wr = Whh.data() + p * G;
            double acc = 0.0;
            for (std::size_t j = 0; j < G; ++j) acc += dz[j] * wr[j];
            dh_next[p] = acc;
            if (gwhh && h_prev[p] != 0.0) {
              double* gr = gwhh + p * G;
              for (std::size_t j = 0; j < G; ++j) gr[j] += h_prev[p] * dz[j];
            }
          }
          if (gb) {
            for (std::size_t j = 0; j < G; ++j) gb[j] += dz[j];
          }
          const double* xr = X.data() + ti * I;
          for (std::size_t p = 0; p < I; ++p) {
            const double* wr = Wih.data() + p * G;
            if (gx) {
              double acc = 0.0;
              for (std::size_t j = 0; j < G; ++j) acc += dz[j] * wr[j];
              gx[ti * I + p] += acc;
            }
            if (gwih && xr[p] != 0.0) {
              double* gr = gwih + p * G;
              for (std::size_t j = 0; j < G; ++j) gr[j] += xr[p] * dz[j];
            }
          }
        }
        if (has_init) {
          if (t.needs_grad(ids[4])) {
            double* gh0 = t.grad(ids[4]).data();
            for (std::size_t j = 0; j < H; ++j) gh0[j] += dh_next[j];
          }
          if (t.needs_grad(ids[5])) {
            double* gc0 = t.grad(ids[5]).data();
            for (std::size_t j = 0; j < H; ++j) gc0[j] += dc_next[j];
          }
        }
      });
  return {ops::slice_cols(joint, 0, H), ops::slice_cols(joint, H, H)};
}

LstmState lstm_step(Var x, const LstmState& prev, const LstmWeights& w) {
  if (x.rows() != 1) fail(ErrorCode::kShapeMismatch, "lstm_step expects a single input row");
  auto seq = lstm_sequence(x, w, false, prev);
  return {seq.h, seq.c};
}

Var bilstm(Var x, const LstmWeights& fwd, const LstmWeights& bwd) {
  const Var parts[] = {lstm_sequence(x, fwd, false).h, lstm_sequence(x, bwd, true).h};
  return ops::concat_cols(parts);
}

void add_lstm_parameters(ParameterStore& store, const std::string& prefix, std::size_t input,
                         std::size_t hidden, std::uint64_t seed) {
  const std::string a = prefix + ".w_ih", b = prefix + ".w_hh";
  store.add(a, glorot_uniform({input, 4 * hidden}, seed, a));
  store.add(b, glorot_uniform({hidden, 4 * hidden}, seed, b));
  store.add(prefix + ".b", Tensor({4 * hidden}));
}

LstmWeights bind_lstm(Tape& tape, ParameterStore& store, const std::string& prefix) {
  return {tape.parameter(store.get(prefix + ".w_ih")), tape.parameter(store.get(prefix + ".w_hh")),
          tape.parameter(store.get(prefix + ".b"))};
}

AttentionOutput multi_head_attention(Var x, const AttentionWeights& w, std::size_t heads) {
  const std::size_t d = x.cols();
  if (heads == 0 || d % heads != 0) {
    fail(ErrorCode::kInvalidArgument, "attention width " + std::to_string(d) +
                                          " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Var q = ops::affine(x, w.wq, w.bq);
  Var k = ops::matmul(x, w.wk);
  Var v = ops::affine(x, w.wv, w.bv);
  AttentionOutput result;
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = ops::slice_cols(q, h * dk, dk);
    Var kh = ops::slice_cols(k, h * dk, dk);
    Var vh = ops::slice_cols(v, h * dk, dk);
    Var a = ops::softmax_rows(ops::scale(ops::matmul_bt(qh, kh), inv_sqrt));
    result.head_weights.push_back(a.value());
    outs.push_back(ops::matmul(a, vh));
  }
  result.out = ops::affine(ops::concat_cols(outs), w.wo, w.bo);
  return result;
}

TransformerOutput transformer_block(Var x, const TransformerWeights& w, std::size_t heads,
                                    double ln_eps, double dropout) {
  auto attn = multi_head_attention(x, w.attn, heads);
  Var h = ops::layer_norm_rows(ops::add(x, ops::dropout(attn.out, dropout)), w.ln1_gain, w.ln1_bias,
                               ln_eps);
  Var ff = ops::affine(ops::relu(ops::affine(h, w.ff_w1, w.ff_b1)), w.ff_w2, w.ff_b2);
  Var out = ops::layer_norm_rows(ops::add(h, ops::dropout(ff, dropout)), w.ln2_gain, w.ln2_bias, ln_eps);
  return {out, std::move(attn.head_weights)};
}

void add_transformer_parameters(ParameterStore& store, const std::string& prefix, std::size_t d,
                                std::size_t ff_dim, std::uint64_t seed) {
  auto matrix = [&](const std::string& name, std::size_t r, std::size_t c) {
    const std::string full = prefix + "." + name;
    store.add(full, glorot_uniform({r, c}, seed, full));
  };
  auto vector = [&](const std::string& name, std::size_t n, double fill) {
    store.add(prefix + "." + name, Tensor({n}, fill));
  };
  for (const char* p : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) matrix(p, d, d);
  for (const char* p : {"attn.bq", "attn.bv", "attn.bo"}) vector(p, d, 0.0);
  vector("ln1.gain", d, 1.0);
  vector("ln1.bias", d, 0.0);
  matrix("ff.w1", d, ff_dim);
  vector("ff.b1", ff_dim, 0.0);
  matrix("ff.w2", ff_dim, d);
  vector("ff.b2", d, 0.0);
  vector("ln2.gain", d, 1.0);
  vector("ln2.bias", d, 0.0);
}

TransformerWeights bind_transformer(Tape& tape, ParameterStore& store, const std::string& prefix) {
  auto p = [&](const char* name) { return tape.parameter(store.get(prefix + "." + name)); };
  TransformerWeights w;
  w.attn = {p("attn.wq"), p("attn.bq"), p("attn.wk"), p("attn.wv"),
            p("attn.bv"), p("attn.wo"), p("attn.bo")};
  w.ln1_gain = p("ln1.gain");
  w.ln1_bias = p("ln1.bias");
  w.ff_w1 = p("ff.w1");
  w.ff_b1 = p("ff.b1");
  w.ff_w2 = p("ff.w2");
  w.ff_b2 = p("ff.b2");
  w.ln2_gain = p("ln2.gain");
  w.ln2_bias = p("ln2.bias");
  return w;
}

}  // namespace masko::nn
