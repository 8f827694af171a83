// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cassert>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"

namespace qdrec::kernels {
namespace {

thread_local std::uint64_t t_macs = 0;

bool cpu_has_avx2() {
#if defined(QDREC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  static const KernelTable scalar = detail::make_scalar_table();
  const char* env = std::getenv("QDREC_ISA");
  const std::string want = env ? env : "";
  if (want == "scalar") return &scalar;
  if (want.empty() || want == "avx2") {
    if (auto t = avx2_table()) {
      static const KernelTable avx2 = *t;
      return &avx2;
    }
  }
  if (want.empty() || want == "neon") {
    if (auto t = neon_table()) {
      static const KernelTable neon = *t;
      return &neon;
    }
  }
  return &scalar;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{pick_default()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() {
  static const KernelTable t = detail::make_scalar_table();
  return t;
}

std::optional<KernelTable> avx2_table() {
#if defined(QDREC_HAVE_AVX2)
  if (cpu_has_avx2()) return detail::make_avx2_table();
#endif
  return std::nullopt;
}

std::optional<KernelTable> neon_table() {
#if defined(QDREC_HAVE_NEON)
  return detail::make_neon_table();
#else
  return std::nullopt;
#endif
}

std::vector<KernelTable> available_tables() {
  std::vector<KernelTable> out{scalar_table()};
  if (auto t = avx2_table()) out.push_back(*t);
  if (auto t = neon_table()) out.push_back(*t);
  return out;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

bool select(Isa isa) {
  static const KernelTable scalar = detail::make_scalar_table();
  static const std::optional<KernelTable> avx2 = avx2_table();
  static const std::optional<KernelTable> neon = neon_table();
  const KernelTable* t = nullptr;
  switch (isa) {
    case Isa::kScalar: t = &scalar; break;
    case Isa::kAvx2: t = avx2 ? &*avx2 : nullptr; break;
    case Isa::kNeon: t = neon ? &*neon : nullptr; break;
  }
  if (!t) return false;
  active_slot().store(t, std::memory_order_release);
  return true;
}

std::uint64_t mac_count() { return t_macs; }

void detail::add_macs(std::uint64_t n) { t_macs += n; }

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  detail::add_macs(a.size());
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  detail::add_macs(x.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  detail::add_macs(static_cast<std::uint64_t>(m) * k * n);
  active().gemm_nn(a, b, c, m, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  detail::add_macs(static_cast<std::uint64_t>(m) * k * n);
  active().gemm_nt(a, b, c, m, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  detail::add_macs(static_cast<std::uint64_t>(m) * k * n);
  active().gemm_tn(a, b, c, m, k, n);
}

void hadamard(std::span<const double> a, std::span<const double> b,
              std::span<double> out) {
  assert(a.size() == b.size() && a.size() == out.size());
  active().hadamard(a.data(), b.data(), out.data(), a.size());
}

}  // namespace qdrec::kernels
