// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "masko/error.hpp"

namespace masko {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Parameter& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return Var{this, it->second};
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = p.trainable;
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  bound_.emplace(&p, id);
  return Var{this, id};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape != this) fail(ErrorCode::kState, "operand recorded on a different tape");
    n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
  }
  if (n.needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::set_training(bool training, std::uint64_t seed) {
  training_ = training;
  rng_.seed(seed);
}

void Tape::backward(Var loss) {
  if (backward_done_) fail(ErrorCode::kState, "backward called twice on the same tape");
  if (value(loss).size() != 1) fail(ErrorCode::kShapeMismatch, "backward requires a scalar loss");
  backward_done_ = true;
  for (auto& n : nodes_) {
    if (n.needs_grad) n.grad.assign(n.value.size(), 0.0);
  }
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad[0] = 1.0;
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad) continue;
    if (n.backprop) n.backprop(*this, static_cast<std::uint32_t>(i));
  }
  for (auto& n : nodes_) {
    if (!n.param || !n.needs_grad) continue;
    Parameter& p = *n.param;
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
    const std::size_t cols = p.value.cols();
    for (std::size_t r : p.frozen_rows) {
      std::fill_n(p.grad.data() + r * cols, cols, 0.0);
    }
  }
}

namespace ops {
namespace {

Tensor mat(std::size_t r, std::size_t c) { return Tensor({r, c}); }

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kShapeMismatch, what);
}

std::string dims(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

// A tape-owned input gradient, or nullptr when the input is frozen.
double* grad_of(Tape& t, std::uint32_t id) {
  return t.needs_grad(id) ? t.grad(id).data() : nullptr;
}

template <typename F>
Var unary(Var a, F&& f, double (*df)(double x, double y)) {
  const Tensor& x = a.value();
  Tensor y(Shape{x.rows(), x.cols()});
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const Var inputs[] = {a};
  return a.tape->record(std::move(y), inputs, [ia = a.id, df](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(self);
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.rows(), "matmul: inner dims disagree (" + dims(A) + " * " + dims(B) + ")");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = mat(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  const Var inputs[] = {a, b};
  return a.tape->record(std::move(C), inputs, [ia = a.id, ib = b.id, m, k, n](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (double* ga = grad_of(t, ia)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* br = B.data() + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += gr[j] * br[j];
          ga[i * k + p] += s;
        }
      }
    }
    if (double* gb = grad_of(t, ib)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* gbr = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbr[j] += av * gr[j];
        }
      }
    }
  });
}

Var matmul_bt(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.cols(), "matmul_bt: inner dims disagree (" + dims(A) + " * " + dims(B) + "^T)");
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor C = mat(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = A.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = B.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      C[i * n + j] = s;
    }
  }
  const Var inputs[] = {a, b};
  return a.tape->record(std::move(C), inputs, [ia = a.id, ib = b.id, m, k, n](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    double* ga = grad_of(t, ia);
    double* gb = grad_of(t, ib);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gv = g[i * n + j];
        if (gv == 0.0) continue;
        if (ga) {
          const double* br = B.data() + j * k;
          double* gar = ga + i * k;
          for (std::size_t p = 0; p < k; ++p) gar[p] += gv * br[p];
        }
        if (gb) {
          const double* ar = A.data() + i * k;
          double* gbr = gb + j * k;
          for (std::size_t p = 0; p < k; ++p) gbr[p] += gv * ar[p];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor T = mat(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) T[j * m + i] = A[i * n + j];
  const Var inputs[] = {a};
  return a.tape->record(std::move(T), inputs, [ia = a.id, m, n](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

namespace {

Var binary_elementwise(Var a, Var b, const char* name, double sa, double sb, bool product) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rows() == B.rows() && A.cols() == B.cols(),
          std::string(name) + ": shapes differ (" + dims(A) + " vs " + dims(B) + ")");
  Tensor C = mat(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = product ? A[i] * B[i] : sa * A[i] + sb * B[i];
  const Var inputs[] = {a, b};
  return a.tape->record(std::move(C), inputs,
                        [ia = a.id, ib = b.id, sa, sb, product](Tape& t, std::uint32_t self) {
                          const auto& g = t.grad(self);
                          if (double* ga = grad_of(t, ia)) {
                            const Tensor& B = t.value(ib);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (product ? B[i] : sa);
                          }
                          if (double* gb = grad_of(t, ib)) {
                            const Tensor& A = t.value(ia);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (product ? A[i] : sb);
                          }
                        });
}

}  // namespace

Var add(Var a, Var b) { return binary_elementwise(a, b, "add", 1.0, 1.0, false); }
Var sub(Var a, Var b) { return binary_elementwise(a, b, "sub", 1.0, -1.0, false); }
Var mul(Var a, Var b) { return binary_elementwise(a, b, "mul", 0.0, 0.0, true); }

Var scale(Var a, double s) {
  const Tensor& A = a.value();
  Tensor C = mat(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = s * A[i];
  const Var inputs[] = {a};
  return a.tape->record(std::move(C), inputs, [ia = a.id, s](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_row(Var a, Var row) {
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  require(R.rows() == 1 && R.cols() == A.cols(),
          "add_row: bias " + dims(R) + " does not broadcast over " + dims(A));
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C = mat(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] = A[i * n + j] + R[j];
  const Var inputs[] = {a, row};
  return a.tape->record(std::move(C), inputs, [ia = a.id, ir = row.id, m, n](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (double* ga = grad_of(t, ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (double* gr = grad_of(t, ir)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
    }
  });
}

Var affine(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var activate(Var a, Activation kind) {
  return kind == Activation::kTanh ? tanh(a) : relu(a);
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require(p.rows() == m, "concat_cols: row counts differ");
    ids.push_back(p.id);
    widths.push_back(p.cols());
    n += p.cols();
  }
  Tensor C = mat(m, n);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    const std::size_t w = P.cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(P.data() + i * w, w, C.data() + i * n + off);
    off += w;
  }
  return parts[0].tape->record(std::move(C), parts, [ids, widths, m, n](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t w = widths[k];
      if (double* gp = grad_of(t, ids[k])) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + off + j];
      }
      off += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no operands");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> heights;
  for (const Var& p : parts) {
    require(p.cols() == n, "concat_rows: column counts differ");
    ids.push_back(p.id);
    heights.push_back(p.rows());
    m += p.rows();
  }
  Tensor C = mat(m, n);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    std::copy(P.values().begin(), P.values().end(), C.data() + off * n);
    off += P.rows();
  }
  return parts[0].tape->record(std::move(C), parts, [ids, heights, n](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t h = heights[k];
      if (double* gp = grad_of(t, ids[k])) {
        for (std::size_t i = 0; i < h * n; ++i) gp[i] += g[off * n + i];
      }
      off += h;
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& A = a.value();
  require(count > 0 && start + count <= A.cols(), "slice_cols: range out of bounds");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C = mat(m, count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(A.data() + i * n + start, count, C.data() + i * count);
  const Var inputs[] = {a};
  return a.tape->record(std::move(C), inputs, [ia = a.id, start, count, m, n](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + start + j] += g[i * count + j];
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Tensor& A = a.value();
  require(count > 0 && start + count <= A.rows(), "slice_rows: range out of bounds");
  const std::size_t n = A.cols();
  Tensor C = mat(count, n);
  std::copy_n(A.data() + start * n, count * n, C.data());
  const Var inputs[] = {a};
  return a.tape->record(std::move(C), inputs, [ia = a.id, start, count, n](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < count * n; ++i) ga[start * n + i] += g[i];
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& A = a.value();
  require(!rows.empty(), "gather_rows: no rows requested");
  const std::size_t n = A.cols();
  Tensor C = mat(rows.size(), n);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= A.rows()) {
      fail(ErrorCode::kInvalidArgument, "gather_rows: row " + std::to_string(rows[k]) +
                                            " out of range for " + dims(A));
    }
    std::copy_n(A.data() + rows[k] * n, n, C.data() + k * n);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const Var inputs[] = {a};
  return a.tape->record(std::move(C), inputs, [ia = a.id, idx = std::move(idx), n](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < n; ++j) ga[idx[k] * n + j] += g[k * n + j];
  });
}

Var mean_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C = mat(1, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C[j] += A[i * n + j];
  for (std::size_t j = 0; j < n; ++j) C[j] /= static_cast<double>(m);
  const Var inputs[] = {a};
  return a.tape->record(std::move(C), inputs, [ia = a.id, m, n](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const auto& g = t.grad(self);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
  });
}

Var sum(Var a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double v : A.values()) s += v;
  const Var inputs[] = {a};
  return a.tape->record(Tensor({1, 1}, s), inputs, [ia = a.id](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const double g = t.grad(self)[0];
    const std::size_t n = t.value(ia).size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor Y = mat(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto p = softmax(A.row(i));
    std::copy(p.begin(), p.end(), Y.data() + i * n);
  }
  const Var inputs[] = {a};
  return a.tape->record(std::move(Y), inputs, [ia = a.id, m, n](Tape& t, std::uint32_t self) {
    double* ga = grad_of(t, ia);
    if (!ga) return;
    const auto& g = t.grad(self);
    const Tensor& Y = t.value(self);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += Y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Tensor& X = x.value();
  const std::size_t m = X.rows(), n = X.cols();
  require(gain.value().size() == n && bias.value().size() == n, "layer_norm: gain/bias width mismatch");
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor Y = mat(m, n);
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += X[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (X[i * n + j] - mu) * (X[i * n + j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (X[i * n + j] - mu) * inv_std[i];
      Y[i * n + j] = xhat[i * n + j] * G[j] + B[j];
    }
  }
  const Var inputs[] = {x, gain, bias};
  return x.tape->record(
      std::move(Y), inputs,
      [ix = x.id, ig = gain.id, ib = bias.id, m, n, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
        const auto& g = t.grad(self);
        const Tensor& G = t.value(ig);
        if (double* gg = grad_of(t, ig)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
        }
        if (double* gb = grad_of(t, ib)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
        if (double* gx = grad_of(t, ix)) {
          const double dn = static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = g[i * n + j] * G[j];
              s1 += dxh;
              s2 += dxh * xhat[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = g[i * n + j] * G[j];
              gx[i * n + j] += inv_std[i] / dn * (dn * dxh - s1 - xhat[i * n + j] * s2);
            }
          }
        }
      });
}

Var dropout(Var a, double rate) {
  Tape& tape = *a.tape;
  if (!tape.training() || rate <= 0.0) return a;
  if (rate >= 1.0) fail(ErrorCode::kInvalidArgument, "dropout rate must be below 1");
  const Tensor& A = a.value();
  Tensor mask = mat(A.rows(), A.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = uniform01(tape.rng()) < rate ? 0.0 : keep;
  return mul(a, tape.constant(std::move(mask)));
}

Var cross_entropy_rows(Var logits, std::span<const std::size_t> targets) {
  const Tensor& Z = logits.value();
  const std::size_t m = Z.rows(), k = Z.cols();
  require(targets.size() == m, "cross_entropy: one target per row required");
  double loss = 0.0;
  Tensor probs = mat(m, k);
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= k) {
      fail(ErrorCode::kInvalidArgument, "cross_entropy: target " + std::to_string(targets[i]) +
                                            " out of range for " + std::to_string(k) + " classes");
    }
    const auto p = softmax(Z.row(i));
    std::copy(p.begin(), p.end(), probs.data() + i * k);
    loss += cross_entropy(Z.row(i), targets[i]);
  }
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  const Var inputs[] = {logits};
  return logits.tape->record(
      Tensor({1, 1}, loss), inputs,
      [iz = logits.id, probs = std::move(probs), tg = std::move(tg), m, k](Tape& t, std::uint32_t self) {
        double* gz = grad_of(t, iz);
        if (!gz) return;
        const double g = t.grad(self)[0];
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            gz[i * k + j] += g * (probs[i * k + j] - (j == tg[i] ? 1.0 : 0.0));
          }
        }
      });
}

Var binary_cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& Z = logits.value();
  require(Z.size() == targets.size(), "binary_cross_entropy: " + std::to_string(Z.size()) +
                                          " logits vs " + std::to_string(targets.size()) + " targets");
  const double loss = masko::binary_cross_entropy(Z.values(), targets);
  std::vector<int> tg(targets.begin(), targets.end());
  const Var inputs[] = {logits};
  return logits.tape->record(Tensor({1, 1}, loss), inputs,
                             [iz = logits.id, tg = std::move(tg)](Tape& t, std::uint32_t self) {
                               double* gz = grad_of(t, iz);
                               if (!gz) return;
                               const double g = t.grad(self)[0];
                               const Tensor& Z = t.value(iz);
                               for (std::size_t i = 0; i < tg.size(); ++i) {
                                 const double s = 1.0 / (1.0 + std::exp(-Z[i]));
                                 gz[i] += g * (s - static_cast<double>(tg[i]));
                               }
                             });
}

}  // namespace ops

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorCode::kInvalidArgument, "softmax of an empty vector");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    fail(ErrorCode::kInvalidArgument, "cross_entropy: target " + std::to_string(target) +
                                          " out of range for " + std::to_string(logits.size()) +
                                          " classes");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return mx + std::log(z) - logits[target];
}

double binary_cross_entropy(std::span<const double> logits, std::span<const int> targets) {
  if (logits.size() != targets.size()) {
    fail(ErrorCode::kShapeMismatch, "binary_cross_entropy: length mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    // -[y log s(x) + (1-y) log(1-s(x))] = max(x,0) - x y + log(1 + e^{-|x|})
    loss += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return loss;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape tape;
  return ops::matmul(tape.constant(a), tape.constant(b)).value();
}

}  // namespace masko
