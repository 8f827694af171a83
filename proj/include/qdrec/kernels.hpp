// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 inner-loop kernels. Each kernel has a scalar reference and
// optional AVX2/NEON variants; the active table is chosen once at startup
// from CPU features and can be overridden with QDREC_ISA=scalar|avx2|neon.
//
// Every public entry point adds its multiply-accumulate count to a
// thread-local counter (see MacScope), so callers can measure the exact
// arithmetic a code path performs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace qdrec::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// Raw kernel signatures. Matrices are row-major and densely packed.
struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // C[k,n] += A[m,k]^T * B[m,n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*hadamard)(const double* a, const double* b, double* out,
                   std::size_t n);
};

const KernelTable& scalar_table();
/// nullopt when the variant is not compiled in or the CPU lacks the feature.
std::optional<KernelTable> avx2_table();
std::optional<KernelTable> neon_table();

/// All variants usable on this machine, scalar first.
std::vector<KernelTable> available_tables();

const KernelTable& active();
/// Forces a variant; returns false if it is unavailable.
bool select(Isa isa);

// Counting wrappers over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
void hadamard(std::span<const double> a, std::span<const double> b,
              std::span<double> out);

/// Running multiply-accumulate total for the calling thread.
std::uint64_t mac_count();

/// Captures the MACs performed on this thread between construction and
/// elapsed().
class MacScope {
 public:
  MacScope() : start_(mac_count()) {}
  std::uint64_t elapsed() const { return mac_count() - start_; }

 private:
  std::uint64_t start_;
};

namespace detail {
void add_macs(std::uint64_t n);
}  // namespace detail

}  // namespace qdrec::kernels
