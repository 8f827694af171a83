// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>

#include "doctest.h"
#include "qdrec/autograd.hpp"
#include "support/gen.hpp"

using namespace qdrec;
using qdrec::ad::Tape;
using qdrec::ad::Var;
using qdrec::testing::random_matrix;

namespace {

// f maps input handles to an output; the scalar is sum(out .* weights).
using Build = std::function<Var(Tape&, std::vector<Var>&)>;

double eval(const Build& f, const std::vector<Matrix>& inputs, const Matrix& weights) {
  Tape t;
  std::vector<Var> v;
  for (const auto& m : inputs) v.push_back(t.constant(m));
  Var out = f(t, v);
  const Matrix& o = t.value(out);
  double s = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) s += o.flat()[i] * weights.flat()[i];
  return s;
}

void check_op(const Build& f, std::vector<Matrix> inputs, Rng& rng, double tol = 1e-6) {
  Matrix weights;
  std::vector<Matrix> grads;
  {
    Tape t;
    std::vector<Var> v;
    for (auto& m : inputs) grads.emplace_back(m.rows(), m.cols());
    for (std::size_t i = 0; i < inputs.size(); ++i) v.push_back(t.param(inputs[i], &grads[i]));
    Var out = f(t, v);
    weights = random_matrix(t.value(out).rows(), t.value(out).cols(), rng);
    t.backward(t.sum_all(t.mul_const(out, weights)));
  }
  const double eps = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x0 = inputs[i].flat()[k];
      inputs[i].flat()[k] = x0 + eps;
      const double up = eval(f, inputs, weights);
      inputs[i].flat()[k] = x0 - eps;
      const double dn = eval(f, inputs, weights);
      inputs[i].flat()[k] = x0;
      const double fd = (up - dn) / (2 * eps);
      CAPTURE(i);
      CAPTURE(k);
      CHECK(std::abs(fd - grads[i].flat()[k]) <= tol * std::max(1.0, std::abs(fd)));
    }
}

}  // namespace

TEST_CASE("per-op gradients match central differences") {
  Rng rng(1);
  auto M = [&](std::size_t r, std::size_t c) { return random_matrix(r, c, rng); };

  SUBCASE("matmul") { check_op([](Tape& t, auto& v) { return t.matmul(v[0], v[1]); }, {M(3, 4), M(4, 2)}, rng); }
  SUBCASE("matmul_nt") { check_op([](Tape& t, auto& v) { return t.matmul_nt(v[0], v[1]); }, {M(3, 4), M(5, 4)}, rng); }
  SUBCASE("add and add_row") {
    check_op([](Tape& t, auto& v) { return t.add_row(t.add(v[0], v[1]), v[2]); }, {M(3, 4), M(3, 4), M(1, 4)}, rng);
  }
  SUBCASE("hadamard") { check_op([](Tape& t, auto& v) { return t.hadamard(v[0], v[1]); }, {M(2, 5), M(2, 5)}, rng); }
  SUBCASE("mul_const and scale") {
    Matrix c = M(2, 3);
    check_op([c](Tape& t, auto& v) { return t.scale(t.mul_const(v[0], c), -1.7); }, {M(2, 3)}, rng);
  }
  SUBCASE("scale by a 1x1 variable") { check_op([](Tape& t, auto& v) { return t.scale(v[0], v[1]); }, {M(3, 3), M(1, 1)}, rng); }
  SUBCASE("scale_rows") { check_op([](Tape& t, auto& v) { return t.scale_rows(v[0], v[1]); }, {M(4, 3), M(4, 1)}, rng); }
  SUBCASE("silu and sigmoid") {
    check_op([](Tape& t, auto& v) { return t.sigmoid(t.silu(v[0])); }, {random_matrix(3, 4, rng, 3.0)}, rng);
  }
  SUBCASE("layer_norm_rows") {
    check_op([](Tape& t, auto& v) { return t.layer_norm_rows(v[0], 1e-10); }, {M(3, 5)}, rng, 1e-5);
  }
  SUBCASE("concat, slice, select") {
    check_op(
        [](Tape& t, auto& v) {
          Var c = t.concat_cols(v[0], v[1]);
          Var parts[] = {c, t.slice_cols(c, 1, 4)};
          Var r = t.concat_rows(std::span<const Var>(parts, 1));
          return t.select_rows(t.concat_rows(std::vector<Var>{r, t.select_rows(c, {1, 1, 0})}), {3, 0, 2, 1, 4});
        },
        {M(2, 3), M(2, 2)}, rng);
  }
  SUBCASE("gather_flat") {
    check_op([](Tape& t, auto& v) { return t.gather_flat(v[0], {0, 3, 3, 5, 1, 0}, 2, 3); }, {M(2, 3)}, rng);
  }
  SUBCASE("sum_all and sum_scalars") {
    check_op(
        [](Tape& t, auto& v) {
          Var a[] = {t.sum_all(v[0]), t.sum_all(t.hadamard(v[1], v[1]))};
          return t.sum_scalars(a);
        },
        {M(2, 2), M(3, 1)}, rng);
  }
  SUBCASE("infonce") { check_op([](Tape& t, auto& v) { return t.infonce(v[0], 2); }, {random_matrix(1, 5, rng, 4.0)}, rng); }
  SUBCASE("bce") {
    check_op([](Tape& t, auto& v) { return t.bce(v[0], {1, 0, 0, 1}); }, {random_matrix(4, 1, rng, 5.0)}, rng);
  }
}

TEST_CASE("constants receive no gradient and sinks accumulate") {
  Matrix w{{2.0}};
  Matrix g(1, 1);
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    Var x = t.constant(Matrix{{3.0}});
    Var y = t.matmul(x, t.param(w, &g));
    CHECK_FALSE(t.needs_grad(x));
    t.backward(t.sum_all(y));
  }
  CHECK(g(0, 0) == 6.0);
}

TEST_CASE("backward seed scales gradients") {
  Matrix w{{1.0, -2.0}};
  Matrix g1(1, 2), g2(1, 2);
  for (auto [seed, g] : {std::pair{1.0, &g1}, std::pair{2.0, &g2}}) {
    Tape t;
    t.backward(t.sum_all(t.silu(t.param(w, g))), seed);
  }
  CHECK(g2(0, 0) == 2.0 * g1(0, 0));
  CHECK(g2(0, 1) == 2.0 * g1(0, 1));
}
