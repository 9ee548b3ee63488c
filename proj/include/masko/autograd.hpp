// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "masko/rng.hpp"
#include "masko/tensor.hpp"

namespace masko {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }
};

// Reverse-mode tape recorded during one forward pass. A tape is used for a
// single backward pass and then discarded.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Binds a parameter as a leaf. Repeated calls for the same parameter return
  // the same node.
  Var parameter(Parameter& p);

  // Records a new node. `inputs` decide whether it needs a gradient.
  Var record(Tensor value, std::span<const Var> inputs, Backprop backprop);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  // Gradient buffer of a node; only valid during backward for nodes that need
  // a gradient.
  std::vector<double>& grad(std::uint32_t id) { return nodes_[id].grad; }
  const std::vector<double>& grad(Var v) const { return nodes_[v.id].grad; }
  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every bound
  // parameter's grad slot. Throws kState when called a second time.
  void backward(Var loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }

  // Training-mode switch consumed by dropout.
  void set_training(bool training, std::uint64_t seed = 0);
  bool training() const noexcept { return training_; }
  Rng& rng() { return rng_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backprop backprop;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> bound_;
  bool backward_done_ = false;
  bool training_ = false;
  Rng rng_;
};

namespace ops {

// Linear algebra.
Var matmul(Var a, Var b);         // (m x k)(k x n)
Var matmul_bt(Var a, Var b);      // (m x k)(n x k)^T
Var transpose(Var a);

// Elementwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var row);      // broadcast a 1 x n row over m x n
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);

enum class Activation { kTanh, kRelu };
Var activate(Var a, Activation kind);

// Shape manipulation.
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var mean_rows(Var a);             // m x n -> 1 x n

// Reductions and normalizers.
Var sum(Var a);                   // -> 1 x 1
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps);
Var dropout(Var a, double rate);

// Losses (summed over rows / entries).
Var cross_entropy_rows(Var logits, std::span<const std::size_t> targets);
Var binary_cross_entropy(Var logits, std::span<const int> targets);

// y = x W + b
Var affine(Var x, Var w, Var b);

}  // namespace ops

// Value-level helpers (no tape).
std::vector<double> softmax(std::span<const double> scores);
double cross_entropy(std::span<const double> logits, std::size_t target);
double binary_cross_entropy(std::span<const double> logits, std::span<const int> targets);
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace masko
