// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/masking.hpp"

#include <unordered_set>

#include "qdrec/error.hpp"
#include "text_util.hpp"

namespace qdrec {

ComponentMasks build_component_masks(const EventSequence& seq, bool session_mask) {
  const std::size_t n = seq.size();
  ComponentMasks m{Matrix(n, n), Matrix(n, n, 1.0), Matrix(n, n, 1.0)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k <= r; ++k) m.causal(r, k) = 1.0;

  if (session_mask) {
    for (std::size_t r = 0; r < n; ++r) {
      const auto& a = seq.tokens[r];
      if (a.kind == TokenKind::kS) continue;
      for (std::size_t k = 0; k < n; ++k) {
        const auto& b = seq.tokens[k];
        if (b.kind == TokenKind::kS) continue;
        if (a.session_id == b.session_id && a.group_id != b.group_id) m.session(r, k) = 0.0;
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    const auto& t = seq.tokens[k];
    if (t.kind != TokenKind::kQ || t.q_valid) continue;
    for (std::size_t r = 0; r < n; ++r)
      if (r != k) m.invalidq(r, k) = 0.0;
  }
  return m;
}

Matrix combine(const Matrix& causal, const Matrix& session, const Matrix& invalidq) {
  if (!causal.same_shape(session) || !causal.same_shape(invalidq))
    throw ValidationError("combine: mask dimensions differ");
  Matrix out(causal.rows(), causal.cols());
  auto a = causal.flat(), b = session.flat(), c = invalidq.flat();
  auto o = out.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i] * c[i];
  return out;
}

Matrix build_mask(const EventSequence& seq, bool session_mask) {
  auto m = build_component_masks(seq, session_mask);
  return combine(m.causal, m.session, m.invalidq);
}

namespace {

std::size_t check_groups(const Matrix& base, std::span<const CandidateGroup> groups) {
  const std::size_t n = base.rows();
  if (base.cols() != n) throw ValidationError("expand_mask: base mask must be square");
  std::size_t c = 0;
  std::unordered_set<std::size_t> positions;
  for (const auto& g : groups) {
    if (g.placeholder_pos >= n)
      throw ValidationError("expand_mask: placeholder position " +
                            std::to_string(g.placeholder_pos) + " out of range");
    if (!positions.insert(g.placeholder_pos).second)
      throw ValidationError("expand_mask: overlapping placeholder position " +
                            std::to_string(g.placeholder_pos));
    c += g.candidates.size();
  }
  return c;
}

}  // namespace

Matrix candidate_mask_rows(const Matrix& base, std::span<const CandidateGroup> groups) {
  const std::size_t n = base.rows();
  Matrix out(check_groups(base, groups), n);
  std::size_t row = 0;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.candidates.size(); ++i, ++row) {
      for (std::size_t k = 0; k < n; ++k) out(row, k) = base(g.placeholder_pos, k);
      out(row, g.placeholder_pos) = 0.0;
    }
  }
  return out;
}

Matrix expand_mask(const Matrix& base, std::span<const CandidateGroup> groups) {
  const std::size_t n = base.rows();
  const std::size_t c = check_groups(base, groups);
  if (c == 0) return base;
  const Matrix bottom = candidate_mask_rows(base, groups);
  Matrix out(n + c, n + c);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < n; ++k) out(r, k) = base(r, k);
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t k = 0; k < n; ++k) out(n + r, k) = bottom(r, k);
    out(n + r, n + r) = 1.0;
  }
  return out;
}

std::string format_mask(const Matrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t k = 0; k < m.cols(); ++k) out += m(r, k) != 0.0 ? '1' : '0';
    out += '\n';
  }
  return out;
}

Matrix parse_mask(std::string_view text) {
  std::vector<std::string_view> rows;
  for (auto line : text::lines(text)) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(line);
  }
  const std::size_t n = rows.size();
  const std::size_t cols = n ? rows[0].size() : 0;
  Matrix m(n, cols);
  for (std::size_t r = 0; r < n; ++r) {
    if (rows[r].size() != cols)
      throw ParseError("mask row " + std::to_string(r + 1) + " has " +
                           std::to_string(rows[r].size()) + " cells, expected " +
                           std::to_string(cols),
                       r + 1);
    for (std::size_t k = 0; k < cols; ++k) {
      const char ch = rows[r][k];
      if (ch != '0' && ch != '1')
        throw ParseError("mask row " + std::to_string(r + 1) + ": non-binary cell", r + 1);
      m(r, k) = ch == '1' ? 1.0 : 0.0;
    }
  }
  return m;
}

EventSequence worked_example_sequence() {
  EventSequence seq;
  seq.tokens.reserve(11);
  auto push = [&](TokenKind kind, int vocab, std::uint32_t session, std::uint32_t group,
                  Timestamp t, bool valid) {
    Token tok;
    tok.kind = kind;
    tok.vocab_id = vocab;
    tok.session_id = session;
    tok.group_id = group;
    tok.timestamp = t;
    tok.q_valid = valid;
    if (kind == TokenKind::kQ) tok.q.kind = valid ? PayloadKind::kSearchQuery : PayloadKind::kUniversal;
    seq.tokens.push_back(std::move(tok));
  };
  push(TokenKind::kS, 0, 0, 0, 0, false);
  push(TokenKind::kQ, 0, 0, 0, 0, false);
  push(TokenKind::kI, 1, 0, 0, 0, false);
  push(TokenKind::kF, 0, 0, 0, 0, false);
  push(TokenKind::kQ, 0, 0, 1, 1, true);
  push(TokenKind::kI, 2, 0, 1, 1, false);
  push(TokenKind::kF, 1, 0, 1, 1, false);
  push(TokenKind::kS, 1, 1, 2, 2, false);
  push(TokenKind::kQ, 0, 1, 2, 2, false);
  push(TokenKind::kI, 3, 1, 2, 2, false);
  push(TokenKind::kF, 2, 1, 2, 2, false);
  return seq;
}

}  // namespace qdrec
