// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Matrix-level reverse-mode differentiation. A Tape records operations as
// they execute; backward() walks the record in reverse and accumulates
// gradients. Parameters enter as references to external matrices paired
// with a gradient sink, so recording a forward pass copies no weights.
//
//   ad::Tape tape;
//   auto w = tape.param(params.w, &grads.w);
//   auto y = tape.matmul(tape.constant(x), w);
//   tape.backward(tape.sum_all(y));

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qdrec/matrix.hpp"

namespace qdrec::ad {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// `value` must outlive the tape; a null `grad` makes it a constant.
  Var param(const Matrix& value, Matrix* grad);

  const Matrix& value(Var v) const;
  /// Gradient accumulated so far (empty when none reached the node).
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);     // a b
  Var matmul_nt(Var a, Var b);  // a b^T
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // row (1 x n) broadcast over a's rows
  Var affine(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }
  Var hadamard(Var a, Var b);
  /// Elementwise product with a constant.
  Var mul_const(Var a, const Matrix& m);
  Var scale(Var a, double s);
  /// a * s for a 1x1 variable s.
  Var scale(Var a, Var s);
  /// Row r of a times col(r, 0) for an n x 1 column.
  Var scale_rows(Var a, Var col);
  Var silu(Var a);
  Var sigmoid(Var a);
  Var layer_norm_rows(Var a, double eps);
  Var concat_cols(Var a, Var b);
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var select_rows(Var a, std::vector<std::size_t> idx);
  /// rows x cols matrix with out[i] = table.flat()[idx[i]].
  Var gather_flat(Var table, std::vector<std::size_t> idx, std::size_t rows, std::size_t cols);
  Var sum_all(Var a);  // 1 x 1
  /// Sum of 1x1 terms.
  Var sum_scalars(std::span<const Var> terms);

  /// -log softmax(z)[positive] for a 1 x m row of logits.
  Var infonce(Var logits, std::size_t positive);
  /// Mean binary cross-entropy of logits (any shape) against labels in {0,1}.
  Var bce(Var logits, std::vector<double> labels);

  /// Seeds d(root) = seed (root must be 1x1) and back-propagates. Parameter
  /// gradients are added into their sinks.
  void backward(Var root, double seed = 1.0);

 private:
  struct Node {
    Matrix val;
    const Matrix* ext = nullptr;
    Matrix* sink = nullptr;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> back;
  };

  Var push(Matrix value, bool needs_grad, std::function<void(Tape&, std::size_t)> back);
  bool any_grad(std::initializer_list<Var> vs) const;
  Matrix& grad_ref(std::size_t id);
  const Matrix& val(std::size_t id) const {
    return nodes_[id].ext ? *nodes_[id].ext : nodes_[id].val;
  }

  std::vector<Node> nodes_;
};

}  // namespace qdrec::ad
