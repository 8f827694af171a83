// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "qdrec/error.hpp"

namespace qdrec {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string full_key(std::string_view section, std::string_view key) {
  std::string k(section);
  k += '.';
  k += key;
  return k;
}

}  // namespace

KvConfig KvConfig::parse(std::string_view text) {
  KvConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError("config line " + std::to_string(line_no) + ": unterminated section", line_no);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value", line_no);
    const auto key = trim(line.substr(0, eq));
    if (key.empty())
      throw ParseError("config line " + std::to_string(line_no) + ": empty key", line_no);
    const auto k = full_key(section, key);
    if (cfg.values_.count(k))
      throw ParseError("config line " + std::to_string(line_no) + ": duplicate key '" + k + "'", line_no);
    cfg.values_[k] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string* KvConfig::lookup(std::string_view section, std::string_view key) const {
  const auto k = full_key(section, key);
  auto it = values_.find(k);
  if (it == values_.end()) return nullptr;
  consumed_.insert(k);
  return &it->second;
}

bool KvConfig::has(std::string_view section, std::string_view key) const {
  return values_.count(full_key(section, key)) > 0;
}

double KvConfig::get(std::string_view section, std::string_view key, double fallback) const {
  const auto* v = lookup(section, key);
  if (!v) return fallback;
  double out = 0.0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size())
    throw ValidationError("config key '" + full_key(section, key) + "': not a number: " + *v);
  return out;
}

std::int64_t KvConfig::get(std::string_view section, std::string_view key,
                           std::int64_t fallback) const {
  const auto* v = lookup(section, key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size())
    throw ValidationError("config key '" + full_key(section, key) + "': not an integer: " + *v);
  return out;
}

int KvConfig::get(std::string_view section, std::string_view key, int fallback) const {
  return static_cast<int>(get(section, key, static_cast<std::int64_t>(fallback)));
}

bool KvConfig::get(std::string_view section, std::string_view key, bool fallback) const {
  const auto* v = lookup(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ValidationError("config key '" + full_key(section, key) + "': not a boolean: " + *v);
}

std::string KvConfig::get(std::string_view section, std::string_view key,
                          const std::string& fallback) const {
  const auto* v = lookup(section, key);
  return v ? *v : fallback;
}

void KvConfig::finish() const {
  for (const auto& [k, v] : values_)
    if (!consumed_.count(k)) throw ValidationError("unknown config key '" + k + "'");
}

void KvConfig::set(const std::string& section, const std::string& key, std::string value) {
  values_[full_key(section, key)] = std::move(value);
}

}  // namespace qdrec
