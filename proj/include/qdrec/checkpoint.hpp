// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor files. Layout, all integers little-endian:
//
//   "QDRECKPT"  u32 version (1)  u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank (2), u64 rows, u64 cols
//   then every payload in manifest order as row-major f64.
//
// Output bytes depend only on the tensors, so identical parameters produce
// identical files.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qdrec/matrix.hpp"

namespace qdrec {

using NamedTensors = std::vector<std::pair<std::string, Matrix>>;

std::string encode_tensors(const NamedTensors& tensors);
/// Throws ParseError on a bad magic, version or truncated payload.
NamedTensors decode_tensors(std::string_view bytes);

void save_tensors(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_tensors(const std::filesystem::path& path);

/// Looks a tensor up by name; throws LookupError when absent.
const Matrix& find_tensor(const NamedTensors& tensors, std::string_view name);
bool has_tensor(const NamedTensors& tensors, std::string_view name);

}  // namespace qdrec
