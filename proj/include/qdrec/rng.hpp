// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeding helpers. All randomness derives from one root seed split into
// labeled sub-seeds, so subsystems draw from independent, reproducible
// streams regardless of call order.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qdrec {

using Rng = std::mt19937_64;

/// FNV-1a 64-bit; stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view text);

std::uint64_t splitmix64(std::uint64_t x);

/// Sub-seed for (root, label, index...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t a = 0, std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t root, std::string_view label,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(root, label, a, b));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace qdrec
