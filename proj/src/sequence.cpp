// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/sequence.hpp"

#include <algorithm>
#include <unordered_set>

#include "qdrec/error.hpp"

namespace qdrec {

std::string_view payload_kind_name(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::kNone: return "none";
    case PayloadKind::kSearchQuery: return "search";
    case PayloadKind::kUniversal: return "universal";
    case PayloadKind::kTargetCandidates: return "candidates";
  }
  return "unknown";
}

QueryPool::QueryPool(std::vector<QueryPoolEntry> entries) : entries_(std::move(entries)) {
  for (std::uint32_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].source_item) by_item_[*entries_[i].source_item].push_back(i);
}

std::span<const std::uint32_t> QueryPool::for_item(ItemId item) const {
  auto it = by_item_.find(item);
  if (it == by_item_.end()) return {};
  return it->second;
}

namespace {

class Builder {
 public:
  Builder(std::uint32_t user, const SequenceOptions& opts, const QueryPool& pool, Rng& rng)
      : opts_(opts), pool_(pool), rng_(rng) {
    seq_.user = user;
  }

  // Emits the optional S token and the Q token for `a`; returns the Q position.
  std::size_t open_group(const Interaction& a, bool placeholder, bool allow_fill) {
    const int scenario = scenario_of(a.timestamp, opts_.scenario_period, opts_.n_scenarios);
    if (opts_.scenario_tokens && (!last_scenario_ || *last_scenario_ != scenario)) {
      Token s;
      s.kind = TokenKind::kS;
      s.vocab_id = scenario;
      stamp(s, a);
      seq_.tokens.push_back(std::move(s));
    }
    last_scenario_ = scenario;
    const int page = last_session_ && *last_session_ == a.session_id ? 1 : 0;
    last_session_ = a.session_id;

    const bool search = opts_.search_queries && a.triggering_query.has_value();
    Token q;
    q.kind = TokenKind::kQ;
    stamp(q, a);
    std::vector<double> query_emb;
    if (search) query_emb = embed_query(*a.triggering_query, opts_.query_dim);

    if (placeholder && opts_.ranking_mode) {
      q.q.kind = PayloadKind::kTargetCandidates;
      q.q.group = seq_.placeholders.size();
    } else if (search) {
      q.q.kind = PayloadKind::kSearchQuery;
      q.q.embedding = query_emb;
      q.q_valid = true;
    } else {
      q.q.kind = PayloadKind::kUniversal;
      if (allow_fill && opts_.search_queries && opts_.beta > 0.0) {
        const auto entries = pool_.entries();
        if (!entries.empty() && uniform01(rng_) < opts_.beta) {
          const auto id = static_cast<std::uint32_t>(uniform_index(rng_, entries.size()));
          q.q.kind = PayloadKind::kSearchQuery;
          q.q.embedding = pool_.entries()[id].embedding;
          q.q.pool_entry = id;
        }
      }
    }
    const std::size_t pos = seq_.tokens.size();
    seq_.tokens.push_back(std::move(q));

    if (placeholder) {
      Placeholder ph;
      ph.pos = pos;
      ph.target = a.item_id;
      ph.timestamp = a.timestamp;
      ph.delta = a.delta;
      ph.search = search;
      ph.scenario = scenario;
      ph.page = page;
      ph.query_embedding = std::move(query_emb);
      seq_.placeholders.push_back(std::move(ph));
    }
    return pos;
  }

  void close_group(const Interaction& a) {
    Token i;
    i.kind = TokenKind::kI;
    i.vocab_id = static_cast<int>(a.item_id);
    stamp(i, a);
    seq_.tokens.push_back(i);
    Token f;
    f.kind = TokenKind::kF;
    f.vocab_id = a.feedback;
    stamp(f, a);
    seq_.tokens.push_back(f);
  }

  EventSequence finish() {
    truncate();
    return std::move(seq_);
  }

 private:
  static void stamp(Token& t, const Interaction& a) {
    t.timestamp = a.timestamp;
    t.session_id = a.session_id;
    t.group_id = a.group_id;
  }

  void truncate() {
    const std::size_t n = seq_.tokens.size();
    if (opts_.max_len == 0 || n <= opts_.max_len) return;
    const std::size_t cut = n - opts_.max_len;
    seq_.tokens.erase(seq_.tokens.begin(), seq_.tokens.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<Placeholder> kept;
    for (auto& ph : seq_.placeholders) {
      if (ph.pos < cut) continue;
      ph.pos -= cut;
      kept.push_back(std::move(ph));
    }
    seq_.placeholders = std::move(kept);
    for (std::size_t j = 0; j < seq_.placeholders.size(); ++j) {
      auto& q = seq_.tokens[seq_.placeholders[j].pos].q;
      if (q.kind == PayloadKind::kTargetCandidates) q.group = j;
    }
  }

  const SequenceOptions& opts_;
  const QueryPool& pool_;
  Rng& rng_;
  EventSequence seq_;
  std::optional<int> last_scenario_;
  std::optional<std::uint32_t> last_session_;
};

void check_order(std::span<const Interaction> xs) {
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i].timestamp < xs[i - 1].timestamp)
      throw ValidationError("interactions are not chronologically sorted at index " +
                            std::to_string(i));
}

void check_options(const SequenceOptions& opts) {
  if (!(opts.beta >= 0.0 && opts.beta <= 1.0))
    throw ValidationError("beta must be in [0,1]");
  if (opts.scenario_period <= 0 || opts.n_scenarios <= 0)
    throw ValidationError("scenario period and count must be positive");
}

}  // namespace

EventSequence assemble_sequence(std::span<const Interaction> interactions,
                                const SequenceOptions& opts, const QueryPool& pool, Rng& rng) {
  check_options(opts);
  check_order(interactions);
  Builder b(interactions.empty() ? 0 : interactions.front().user_id, opts, pool, rng);
  for (const auto& a : interactions) {
    const bool placeholder = a.delta || (opts.search_queries && a.triggering_query);
    b.open_group(a, placeholder, true);
    b.close_group(a);
  }
  return b.finish();
}

EventSequence assemble_for_prediction(std::span<const Interaction> history,
                                      const Interaction& target, const SequenceOptions& opts,
                                      const QueryPool& pool, Rng& rng) {
  check_options(opts);
  check_order(history);
  if (!history.empty() && target.timestamp < history.back().timestamp)
    throw ValidationError("prediction target precedes its history");
  Builder b(target.user_id, opts, pool, rng);
  for (const auto& a : history) {
    b.open_group(a, false, true);
    b.close_group(a);
  }
  b.open_group(target, true, false);
  return b.finish();
}

std::vector<CandidateGroup> attach_candidates(const EventSequence& seq,
                                              const NegativeSource& source, std::size_t c,
                                              Rng& rng) {
  std::vector<CandidateGroup> groups;
  for (std::size_t j = 0; j < seq.placeholders.size(); ++j) {
    const auto& ph = seq.placeholders[j];
    if (!ph.target) continue;
    const ItemId pos_item = *ph.target;
    std::vector<ItemId> negs = c == 0 ? std::vector<ItemId>{} : source(ph, pos_item, c, rng);
    if (negs.size() != c)
      throw ValidationError("negative source returned " + std::to_string(negs.size()) +
                            " items, expected " + std::to_string(c));
    std::unordered_set<ItemId> seen(negs.begin(), negs.end());
    if (seen.size() != negs.size() || seen.count(pos_item))
      throw ValidationError("negative source returned duplicates or the positive");
    CandidateGroup g;
    g.placeholder = j;
    g.placeholder_pos = ph.pos;
    g.draw_time = ph.timestamp;
    g.positive_index = uniform_index(rng, c + 1);
    g.candidates = std::move(negs);
    g.candidates.insert(g.candidates.begin() + static_cast<std::ptrdiff_t>(g.positive_index),
                        pos_item);
    groups.push_back(std::move(g));
  }
  return groups;
}

std::string dump_sequence(const EventSequence& seq) {
  std::string out;
  for (const auto& t : seq.tokens) {
    switch (t.kind) {
      case TokenKind::kS: out += "S(" + std::to_string(t.vocab_id) + ")"; break;
      case TokenKind::kQ: out += "Q(" + std::string(payload_kind_name(t.q.kind)) + ")"; break;
      case TokenKind::kI: out += "I(" + std::to_string(t.vocab_id) + ")"; break;
      case TokenKind::kF: out += "F(" + std::to_string(t.vocab_id) + ")"; break;
    }
    out += '\n';
  }
  return out;
}

}  // namespace qdrec
