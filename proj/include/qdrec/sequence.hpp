// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Token sequences built from a user's interactions. Each action group becomes
// (Q, I, F); an S token precedes a group whenever the scenario changes. The Q
// token is the query placeholder: its payload is the actual search query,
// a query-pool entry, the shared universal token, or (in ranking mode) the
// candidate group to be scored.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qdrec/catalog.hpp"
#include "qdrec/datagen.hpp"
#include "qdrec/rng.hpp"

namespace qdrec {

enum class TokenKind : std::uint8_t { kS, kQ, kI, kF };

enum class PayloadKind : std::uint8_t { kNone, kSearchQuery, kUniversal, kTargetCandidates };

struct QPayload {
  PayloadKind kind = PayloadKind::kNone;
  std::vector<double> embedding;            // kSearchQuery only
  std::optional<std::uint32_t> pool_entry;  // set when filled from the pool
  std::size_t group = 0;                    // kTargetCandidates: placeholder ordinal
};

struct Token {
  TokenKind kind = TokenKind::kS;
  int vocab_id = 0;  // scenario, item or feedback id; unused for Q
  Timestamp timestamp = 0;
  std::uint32_t session_id = 0;
  std::uint32_t group_id = 0;
  QPayload q;
  bool q_valid = false;  // Q only: payload is a genuine user search query
};

std::string_view payload_kind_name(PayloadKind kind);

/// A prediction position and what the model needs to score it.
struct Placeholder {
  std::size_t pos = 0;
  std::optional<ItemId> target;  // ground-truth item of the group
  Timestamp timestamp = 0;
  bool delta = false;
  bool search = false;  // the group was triggered by a search
  int scenario = 0;
  int page = 0;  // 0: first group of its session, 1: later
  std::vector<double> query_embedding;  // search groups only
};

struct EventSequence {
  std::uint32_t user = 0;
  std::vector<Token> tokens;
  std::vector<Placeholder> placeholders;
  std::size_t size() const { return tokens.size(); }
};

struct CandidateGroup {
  std::size_t placeholder = 0;  // index into EventSequence::placeholders
  std::size_t placeholder_pos = 0;
  std::vector<ItemId> candidates;
  std::size_t positive_index = 0;
  Timestamp draw_time = 0;
};

/// Pool entries indexed by source item.
class QueryPool {
 public:
  QueryPool() = default;
  explicit QueryPool(std::vector<QueryPoolEntry> entries);
  std::span<const QueryPoolEntry> entries() const { return entries_; }
  std::span<const std::uint32_t> for_item(ItemId item) const;

 private:
  std::vector<QueryPoolEntry> entries_;
  std::unordered_map<ItemId, std::vector<std::uint32_t>> by_item_;
};

struct SequenceOptions {
  double beta = 0.5;
  std::size_t max_len = 0;  // 0: no truncation; otherwise keep the newest tokens
  bool scenario_tokens = true;
  bool search_queries = true;
  Timestamp scenario_period = 25;
  int n_scenarios = 4;
  std::size_t query_dim = 32;
  /// Placeholders get TargetCandidates payloads (invalid as keys).
  bool ranking_mode = false;
};

/// Builds the token sequence for chronologically sorted interactions.
/// Placeholders are the groups with delta set or triggered by a search.
EventSequence assemble_sequence(std::span<const Interaction> interactions,
                                const SequenceOptions& opts, const QueryPool& pool, Rng& rng);

/// History groups followed by a final placeholder for `target` (an S token is
/// inserted first when the scenario changes). History Qs are not placeholders.
EventSequence assemble_for_prediction(std::span<const Interaction> history,
                                      const Interaction& target, const SequenceOptions& opts,
                                      const QueryPool& pool, Rng& rng);

/// Negative item source for one placeholder: returns `c` distinct items other
/// than the positive.
using NegativeSource =
    std::function<std::vector<ItemId>(const Placeholder& ph, ItemId positive, std::size_t c, Rng& rng)>;

/// One group per placeholder that has a target; the positive is inserted at
/// a uniformly random index among the negatives.
std::vector<CandidateGroup> attach_candidates(const EventSequence& seq,
                                              const NegativeSource& source, std::size_t c,
                                              Rng& rng);

/// `S(id)`, `Q(kind)`, `I(id)` or `F(id)`, one token per line.
std::string dump_sequence(const EventSequence& seq);

}  // namespace qdrec
