// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "qdrec/error.hpp"
#include "qdrec/kernels.hpp"

namespace qdrec::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(std::string("autograd: ") + what);
}

}  // namespace

Var Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, std::size_t)> back) {
  Node n;
  n.val = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

bool Tape::any_grad(std::initializer_list<Var> vs) const {
  for (Var v : vs)
    if (nodes_.at(v.id).needs_grad) return true;
  return false;
}

Matrix& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && val(id).size() > 0) n.grad = Matrix(val(id).rows(), val(id).cols());
  return n.grad;
}

const Matrix& Tape::value(Var v) const { return val(v.id); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::param(const Matrix& value, Matrix* grad) {
  if (grad) require(grad->same_shape(value), "gradient sink shape differs from parameter");
  Node n;
  n.ext = &value;
  n.sink = grad;
  n.needs_grad = grad != nullptr;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols() == B.rows(), "matmul shape mismatch");
  return push(qdrec::matmul(A, B), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& A = t.val(a.id);
    const Matrix& B = t.val(b.id);
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (t.nodes_[a.id].needs_grad) kernels::gemm_nt(g.data(), B.data(), t.grad_ref(a.id).data(), m, n, k);
    if (t.nodes_[b.id].needs_grad) kernels::gemm_tn(A.data(), g.data(), t.grad_ref(b.id).data(), m, k, n);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols() == B.cols(), "matmul_nt shape mismatch");
  return push(qdrec::matmul_nt(A, B), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& A = t.val(a.id);
    const Matrix& B = t.val(b.id);
    const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    if (t.nodes_[a.id].needs_grad) kernels::gemm_nn(g.data(), B.data(), t.grad_ref(a.id).data(), m, n, k);
    if (t.nodes_[b.id].needs_grad) kernels::gemm_tn(g.data(), A.data(), t.grad_ref(b.id).data(), m, n, k);
  });
}

namespace {

void accumulate(Matrix& dst, const Matrix& src) {
  auto d = dst.flat();
  auto s = src.flat();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var Tape::add(Var a, Var b) {
  require(value(a).same_shape(value(b)), "add shape mismatch");
  return push(qdrec::add(value(a), value(b)), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) accumulate(t.grad_ref(a.id), g);
    if (t.nodes_[b.id].needs_grad) accumulate(t.grad_ref(b.id), g);
  });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& A = value(a);
  const Matrix& R = value(row);
  require(R.rows() == 1 && R.cols() == A.cols(), "add_row shape mismatch");
  Matrix out = A;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += R(0, c);
  return push(std::move(out), any_grad({a, row}), [a, row](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) accumulate(t.grad_ref(a.id), g);
    if (t.nodes_[row.id].needs_grad) {
      Matrix& gr = t.grad_ref(row.id);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c);
    }
  });
}

Var Tape::hadamard(Var a, Var b) {
  require(value(a).same_shape(value(b)), "hadamard shape mismatch");
  return push(qdrec::hadamard(value(a), value(b)), any_grad({a, b}),
              [a, b](Tape& t, std::size_t self) {
                const auto g = t.nodes_[self].grad.flat();
                if (t.nodes_[a.id].needs_grad) {
                  auto ga = t.grad_ref(a.id).flat();
                  const auto vb = t.val(b.id).flat();
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
                }
                if (t.nodes_[b.id].needs_grad) {
                  auto gb = t.grad_ref(b.id).flat();
                  const auto va = t.val(a.id).flat();
                  for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
                }
              });
}

Var Tape::mul_const(Var a, const Matrix& m) {
  require(value(a).same_shape(m), "mul_const shape mismatch");
  return push(qdrec::hadamard(value(a), m), any_grad({a}), [a, m](Tape& t, std::size_t self) {
    const auto g = t.nodes_[self].grad.flat();
    auto ga = t.grad_ref(a.id).flat();
    const auto mv = m.flat();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mv[i];
  });
}

Var Tape::scale(Var a, double s) {
  Matrix out = value(a);
  scale_inplace(out, s);
  return push(std::move(out), any_grad({a}), [a, s](Tape& t, std::size_t self) {
    const auto g = t.nodes_[self].grad.flat();
    auto ga = t.grad_ref(a.id).flat();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var Tape::scale(Var a, Var s) {
  require(value(s).rows() == 1 && value(s).cols() == 1, "scale factor must be 1x1");
  Matrix out = value(a);
  scale_inplace(out, value(s)(0, 0));
  return push(std::move(out), any_grad({a, s}), [a, s](Tape& t, std::size_t self) {
    const auto g = t.nodes_[self].grad.flat();
    const double sv = t.val(s.id)(0, 0);
    if (t.nodes_[a.id].needs_grad) {
      auto ga = t.grad_ref(a.id).flat();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sv * g[i];
    }
    if (t.nodes_[s.id].needs_grad) {
      const auto av = t.val(a.id).flat();
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += av[i] * g[i];
      t.grad_ref(s.id)(0, 0) += acc;
    }
  });
}

Var Tape::scale_rows(Var a, Var col) {
  const Matrix& A = value(a);
  const Matrix& C = value(col);
  require(C.cols() == 1 && C.rows() == A.rows(), "scale_rows expects an n x 1 column");
  Matrix out = A;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& v : out.row(r)) v *= C(r, 0);
  return push(std::move(out), any_grad({a, col}), [a, col](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& A = t.val(a.id);
    const Matrix& C = t.val(col.id);
    if (t.nodes_[a.id].needs_grad) {
      Matrix& ga = t.grad_ref(a.id);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * C(r, 0);
    }
    if (t.nodes_[col.id].needs_grad) {
      Matrix& gc = t.grad_ref(col.id);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gc(r, 0) += g(r, c) * A(r, c);
    }
  });
}

Var Tape::silu(Var a) {
  return push(qdrec::silu(value(a)), any_grad({a}), [a](Tape& t, std::size_t self) {
    const auto g = t.nodes_[self].grad.flat();
    const auto x = t.val(a.id).flat();
    auto ga = t.grad_ref(a.id).flat();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = qdrec::sigmoid(x[i]);
      ga[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Var Tape::sigmoid(Var a) {
  return push(qdrec::sigmoid(value(a)), any_grad({a}), [a](Tape& t, std::size_t self) {
    const auto g = t.nodes_[self].grad.flat();
    const auto y = t.nodes_[self].val.flat();
    auto ga = t.grad_ref(a.id).flat();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Tape::layer_norm_rows(Var a, double eps) {
  return push(qdrec::layer_norm_rows(value(a), eps), any_grad({a}),
              [a, eps](Tape& t, std::size_t self) {
                const Matrix& g = t.nodes_[self].grad;
                const Matrix& y = t.nodes_[self].val;
                const Matrix& x = t.val(a.id);
                Matrix& ga = t.grad_ref(a.id);
                const double n = static_cast<double>(x.cols());
                for (std::size_t r = 0; r < x.rows(); ++r) {
                  double mean = 0.0;
                  for (double v : x.row(r)) mean += v;
                  mean /= n;
                  double var = 0.0;
                  for (double v : x.row(r)) var += (v - mean) * (v - mean);
                  var /= n;
                  const double inv = 1.0 / std::sqrt(var + eps);
                  double mg = 0.0, mgy = 0.0;
                  for (std::size_t c = 0; c < x.cols(); ++c) {
                    mg += g(r, c);
                    mgy += g(r, c) * y(r, c);
                  }
                  mg /= n;
                  mgy /= n;
                  for (std::size_t c = 0; c < x.cols(); ++c)
                    ga(r, c) += inv * (g(r, c) - mg - y(r, c) * mgy);
                }
              });
}

Var Tape::concat_cols(Var a, Var b) {
  require(value(a).rows() == value(b).rows(), "concat_cols row mismatch");
  return push(qdrec::concat_cols(value(a), value(b)), any_grad({a, b}),
              [a, b](Tape& t, std::size_t self) {
                const Matrix& g = t.nodes_[self].grad;
                const std::size_t ca = t.val(a.id).cols();
                if (t.nodes_[a.id].needs_grad) {
                  Matrix& ga = t.grad_ref(a.id);
                  for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
                }
                if (t.nodes_[b.id].needs_grad) {
                  Matrix& gb = t.grad_ref(b.id);
                  for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = ca; c < g.cols(); ++c) gb(r, c - ca) += g(r, c);
                }
              });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows needs at least one part");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool needs = false;
  for (Var v : parts) {
    require(value(v).cols() == cols, "concat_rows column mismatch");
    rows += value(v).rows();
    needs = needs || nodes_[v.id].needs_grad;
  }
  Matrix out(rows, cols);
  std::size_t r0 = 0;
  for (Var v : parts) {
    const Matrix& m = value(v);
    std::copy(m.flat().begin(), m.flat().end(), out.data() + r0 * cols);
    r0 += m.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), needs, [ps](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    std::size_t off = 0;
    for (Var v : ps) {
      const std::size_t n = t.val(v.id).size();
      if (t.nodes_[v.id].needs_grad) {
        auto gv = t.grad_ref(v.id).flat();
        for (std::size_t i = 0; i < n; ++i) gv[i] += g.data()[off + i];
      }
      off += n;
    }
  });
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= value(a).cols(), "slice_cols range");
  return push(qdrec::slice_cols(value(a), begin, end), any_grad({a}),
              [a, begin](Tape& t, std::size_t self) {
                const Matrix& g = t.nodes_[self].grad;
                Matrix& ga = t.grad_ref(a.id);
                for (std::size_t r = 0; r < g.rows(); ++r)
                  for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) += g(r, c);
              });
}

Var Tape::select_rows(Var a, std::vector<std::size_t> idx) {
  for (auto i : idx) require(i < value(a).rows(), "select_rows index out of range");
  Matrix out = qdrec::select_rows(value(a), idx);
  return push(std::move(out), any_grad({a}), [a, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad_ref(a.id);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(idx[i], c) += g(i, c);
  });
}

Var Tape::gather_flat(Var table, std::vector<std::size_t> idx, std::size_t rows,
                      std::size_t cols) {
  require(idx.size() == rows * cols, "gather_flat index count");
  const auto tv = value(table).flat();
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < tv.size(), "gather_flat index out of range");
    out.flat()[i] = tv[idx[i]];
  }
  return push(std::move(out), any_grad({table}),
              [table, idx = std::move(idx)](Tape& t, std::size_t self) {
                const auto g = t.nodes_[self].grad.flat();
                auto gt = t.grad_ref(table.id).flat();
                for (std::size_t i = 0; i < idx.size(); ++i) gt[idx[i]] += g[i];
              });
}

Var Tape::sum_all(Var a) {
  double s = 0.0;
  for (double v : value(a).flat()) s += v;
  return push(Matrix(1, 1, s), any_grad({a}), [a](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad(0, 0);
    for (double& v : t.grad_ref(a.id).flat()) v += g;
  });
}

Var Tape::sum_scalars(std::span<const Var> terms) {
  double s = 0.0;
  bool needs = false;
  for (Var v : terms) {
    require(value(v).size() == 1, "sum_scalars expects 1x1 terms");
    s += value(v)(0, 0);
    needs = needs || nodes_[v.id].needs_grad;
  }
  std::vector<Var> ts(terms.begin(), terms.end());
  return push(Matrix(1, 1, s), needs, [ts](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad(0, 0);
    for (Var v : ts)
      if (t.nodes_[v.id].needs_grad) t.grad_ref(v.id)(0, 0) += g;
  });
}

Var Tape::infonce(Var logits, std::size_t positive) {
  const Matrix& z = value(logits);
  require(z.rows() == 1 && z.cols() > 0, "infonce expects a non-empty 1 x m row");
  require(positive < z.cols(), "infonce positive index out of range");
  double mx = z(0, 0);
  for (double v : z.flat()) mx = std::max(mx, v);
  double se = 0.0;
  for (double v : z.flat()) se += std::exp(v - mx);
  const double loss = mx + std::log(se) - z(0, positive);
  return push(Matrix(1, 1, loss), any_grad({logits}),
              [logits, positive, mx, se](Tape& t, std::size_t self) {
                const double g = t.nodes_[self].grad(0, 0);
                const auto zv = t.val(logits.id).flat();
                auto gz = t.grad_ref(logits.id).flat();
                for (std::size_t i = 0; i < zv.size(); ++i)
                  gz[i] += g * (std::exp(zv[i] - mx) / se - (i == positive ? 1.0 : 0.0));
              });
}

Var Tape::bce(Var logits, std::vector<double> labels) {
  const auto z = value(logits).flat();
  require(z.size() == labels.size() && !z.empty(), "bce label count");
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    loss += std::max(z[i], 0.0) - labels[i] * z[i] + std::log1p(std::exp(-std::abs(z[i])));
  loss /= static_cast<double>(z.size());
  return push(Matrix(1, 1, loss), any_grad({logits}),
              [logits, labels = std::move(labels)](Tape& t, std::size_t self) {
                const double g = t.nodes_[self].grad(0, 0);
                const auto zv = t.val(logits.id).flat();
                auto gz = t.grad_ref(logits.id).flat();
                const double n = static_cast<double>(zv.size());
                for (std::size_t i = 0; i < zv.size(); ++i)
                  gz[i] += g * (qdrec::sigmoid(zv[i]) - labels[i]) / n;
              });
}

void Tape::backward(Var root, double seed) {
  require(value(root).size() == 1, "backward root must be 1x1");
  if (!nodes_[root.id].needs_grad) return;
  grad_ref(root.id)(0, 0) += seed;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.back) n.back(*this, i);
    if (n.sink) accumulate(*n.sink, n.grad);
  }
}

}  // namespace qdrec::ad
