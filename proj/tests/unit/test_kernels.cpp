// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "qdrec/kernels.hpp"
#include "qdrec/rng.hpp"

namespace k = qdrec::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, qdrec::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * qdrec::uniform01(rng) - 1.0;
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("scalar table is always available and listed first") {
  auto tables = k::available_tables();
  REQUIRE(!tables.empty());
  CHECK(tables.front().isa == k::Isa::kScalar);
  CHECK(k::isa_name(k::Isa::kAvx2) == "avx2");
}

TEST_CASE("every variant matches the scalar reference") {
  const auto& ref = k::scalar_table();
  qdrec::Rng rng(11);
  for (const auto& t : k::available_tables()) {
    CAPTURE(k::isa_name(t.isa));
    for (std::size_t trial = 0; trial < 40; ++trial) {
      std::size_t m = 1 + qdrec::uniform_index(rng, 9);
      std::size_t kk = 1 + qdrec::uniform_index(rng, 19);
      std::size_t n = 1 + qdrec::uniform_index(rng, 13);
      auto a = random_vec(m * kk, rng);
      auto b = random_vec(kk * n, rng);
      auto bt = random_vec(n * kk, rng);
      auto bm = random_vec(m * n, rng);

      CHECK(std::abs(t.dot(a.data(), a.data(), a.size()) - ref.dot(a.data(), a.data(), a.size())) <
            1e-12);

      std::vector<double> y1 = bm, y2 = bm;
      t.axpy(0.37, bm.data(), y1.data(), y1.size());
      ref.axpy(0.37, bm.data(), y2.data(), y2.size());
      CHECK(max_diff(y1, y2) < 1e-14);

      std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
      t.gemm_nn(a.data(), b.data(), c1.data(), m, kk, n);
      ref.gemm_nn(a.data(), b.data(), c2.data(), m, kk, n);
      CHECK(max_diff(c1, c2) < 1e-12);

      std::fill(c1.begin(), c1.end(), 0.0);
      std::fill(c2.begin(), c2.end(), 0.0);
      t.gemm_nt(a.data(), bt.data(), c1.data(), m, kk, n);
      ref.gemm_nt(a.data(), bt.data(), c2.data(), m, kk, n);
      CHECK(max_diff(c1, c2) < 1e-12);

      std::vector<double> d1(kk * n, 0.0), d2(kk * n, 0.0);
      t.gemm_tn(a.data(), bm.data(), d1.data(), m, kk, n);
      ref.gemm_tn(a.data(), bm.data(), d2.data(), m, kk, n);
      CHECK(max_diff(d1, d2) < 1e-12);

      std::vector<double> h1(bm.size()), h2(bm.size());
      t.hadamard(bm.data(), y1.data(), h1.data(), bm.size());
      ref.hadamard(bm.data(), y1.data(), h2.data(), bm.size());
      CHECK(h1 == h2);
    }
  }
}

TEST_CASE("scalar gemm agrees with a triple loop") {
  qdrec::Rng rng(3);
  const std::size_t m = 4, kk = 5, n = 3;
  auto a = random_vec(m * kk, rng);
  auto b = random_vec(kk * n, rng);
  std::vector<double> c(m * n, 0.0), want(m * n, 0.0);
  k::scalar_table().gemm_nn(a.data(), b.data(), c.data(), m, kk, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) want[i * n + j] += a[i * kk + p] * b[p * n + j];
  CHECK(max_diff(c, want) < 1e-14);
}

TEST_CASE("counting wrappers report exact MACs") {
  std::vector<double> a(12, 1.0), b(12, 1.0), c(16, 0.0);
  k::MacScope scope;
  k::dot(a, b);
  CHECK(scope.elapsed() == 12);
  k::gemm_nn(a.data(), b.data(), c.data(), 4, 3, 4);
  CHECK(scope.elapsed() == 12 + 48);
  k::axpy(2.0, a, b);
  CHECK(scope.elapsed() == 12 + 48 + 12);
}

TEST_CASE("select switches the active table") {
  const auto before = k::active().isa;
  REQUIRE(k::select(k::Isa::kScalar));
  CHECK(k::active().isa == k::Isa::kScalar);
  for (const auto& t : k::available_tables()) CHECK(k::select(t.isa));
  k::select(before);
}
