// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// AArch64 Advanced SIMD variant (two f64 lanes). NEON is mandatory on
// AArch64, so no runtime feature probe is needed.

#include <arm_neon.h>

#include "kernels_internal.hpp"

namespace qdrec::kernels::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_neon(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      axpy_neon(av, b + p * n, crow, n);
    }
  }
}

void gemm_nt_neon(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += dot_neon(a + i * k, b + j * k, k);
}

void gemm_tn_neon(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < m; ++p) {
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = a[p * k + i];
      if (av == 0.0) continue;
      axpy_neon(av, brow, c + i * n, n);
    }
  }
}

void hadamard_neon(const double* a, const double* b, double* out,
                   std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

}  // namespace

KernelTable make_neon_table() {
  return KernelTable{Isa::kNeon,  dot_neon,     axpy_neon,    gemm_nn_neon,
                     gemm_nt_neon, gemm_tn_neon, hadamard_neon};
}

}  // namespace qdrec::kernels::detail
