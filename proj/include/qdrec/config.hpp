// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key/value config files with [sections]:
//
//   # comment
//   [gen]
//   n_users = 200
//   churn_rate = 0.5
//
// Readers pull typed values with get(); finish() rejects any key that was
// never read, naming it.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace qdrec {

class KvConfig {
 public:
  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::filesystem::path& path);

  bool has(std::string_view section, std::string_view key) const;

  double get(std::string_view section, std::string_view key, double fallback) const;
  std::int64_t get(std::string_view section, std::string_view key,
                   std::int64_t fallback) const;
  int get(std::string_view section, std::string_view key, int fallback) const;
  bool get(std::string_view section, std::string_view key, bool fallback) const;
  std::string get(std::string_view section, std::string_view key,
                  const std::string& fallback) const;
  std::string get(std::string_view section, std::string_view key,
                  const char* fallback) const {
    return get(section, key, std::string(fallback));
  }

  /// Throws ValidationError on the first key that no get() consumed.
  void finish() const;

  void set(const std::string& section, const std::string& key, std::string value);

 private:
  const std::string* lookup(std::string_view section, std::string_view key) const;

  std::map<std::string, std::string> values_;  // "section.key" -> raw value
  mutable std::set<std::string> consumed_;
};

}  // namespace qdrec
