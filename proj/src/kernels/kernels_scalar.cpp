// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernels_internal.hpp"

namespace qdrec::kernels::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_scalar(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      axpy_scalar(av, b + p * n, crow, n);
    }
  }
}

void gemm_nt_scalar(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += dot_scalar(a + i * k, b + j * k, k);
}

void gemm_tn_scalar(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < m; ++p) {
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = a[p * k + i];
      if (av == 0.0) continue;
      axpy_scalar(av, brow, c + i * n, n);
    }
  }
}

void hadamard_scalar(const double* a, const double* b, double* out,
                     std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

}  // namespace

KernelTable make_scalar_table() {
  return KernelTable{Isa::kScalar, dot_scalar,     axpy_scalar,
                     gemm_nn_scalar, gemm_nt_scalar, gemm_tn_scalar,
                     hadamard_scalar};
}

}  // namespace qdrec::kernels::detail
