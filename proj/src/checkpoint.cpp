// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "qdrec/error.hpp"
#include "text_util.hpp"

namespace qdrec {
namespace {

constexpr char kMagic[8] = {'Q', 'D', 'R', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

void put_double(std::string& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n)
      throw ParseError(std::string("checkpoint truncated while reading ") + what, 0);
  }

  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensors(const NamedTensors& tensors) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, m.rows());
    put<std::uint64_t>(out, m.cols());
  }
  for (const auto& [name, m] : tensors)
    for (double v : m.flat()) put_double(out, v);
  return out;
}

NamedTensors decode_tensors(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof(kMagic), "magic") != std::string_view(kMagic, sizeof(kMagic)))
    throw ParseError("not a checkpoint file (bad magic)", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  const auto count = r.get<std::uint32_t>("tensor count");
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>("name length");
    std::string name(r.bytes(len, "name"));
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank != 2) throw ParseError("tensor " + name + " has unsupported rank", 0);
    const auto rows = r.get<std::uint64_t>("rows");
    const auto cols = r.get<std::uint64_t>("cols");
    if (cols != 0 && rows > bytes.size() / 8 / cols)
      throw ParseError("tensor " + name + " is larger than the file", 0);
    out.emplace_back(std::move(name), Matrix(rows, cols));
  }
  for (auto& [name, m] : out)
    for (double& v : m.flat()) v = std::bit_cast<double>(r.get<std::uint64_t>("payload"));
  if (!r.done()) throw ParseError("checkpoint has trailing bytes", 0);
  return out;
}

void save_tensors(const NamedTensors& tensors, const std::filesystem::path& path) {
  text::write_file(path, encode_tensors(tensors));
}

NamedTensors load_tensors(const std::filesystem::path& path) {
  return decode_tensors(text::read_file(path));
}

const Matrix& find_tensor(const NamedTensors& tensors, std::string_view name) {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw LookupError("checkpoint has no tensor '" + std::string(name) + "'");
}

bool has_tensor(const NamedTensors& tensors, std::string_view name) {
  for (const auto& [n, m] : tensors)
    if (n == name) return true;
  return false;
}

}  // namespace qdrec
