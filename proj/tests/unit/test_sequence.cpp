// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include "doctest.h"
#include "qdrec/error.hpp"
#include "qdrec/masking.hpp"
#include "qdrec/sampling.hpp"
#include "qdrec/sequence.hpp"
#include "support/gen.hpp"

using namespace qdrec;
using qdrec::testing::random_interactions;

namespace {

QueryPool small_pool(std::size_t dim) {
  std::vector<QueryPoolEntry> entries;
  for (std::uint32_t i = 0; i < 12; ++i) {
    QueryPoolEntry e;
    e.entry_id = i;
    e.kind = QueryKind::kKeyword;
    e.source_item = i % 6;
    e.text = "entry " + std::to_string(i);
    e.embedding = embed_query(e.text, dim);
    entries.push_back(std::move(e));
  }
  return QueryPool(std::move(entries));
}

SequenceOptions opts(double beta) {
  SequenceOptions o;
  o.beta = beta;
  o.query_dim = 8;
  return o;
}

// Checks the (S?) Q I F grammar and returns the number of groups.
std::size_t check_grammar(const EventSequence& seq, std::span<const Interaction> xs,
                          const SequenceOptions& o) {
  std::size_t i = 0, g = 0;
  std::optional<int> scen;
  while (i < seq.tokens.size()) {
    const int s = scenario_of(xs[g].timestamp, o.scenario_period, o.n_scenarios);
    if (!scen || *scen != s) {
      REQUIRE(seq.tokens[i].kind == TokenKind::kS);
      CHECK(seq.tokens[i].vocab_id == s);
      ++i;
    }
    scen = s;
    REQUIRE(i + 2 < seq.tokens.size());
    CHECK(seq.tokens[i].kind == TokenKind::kQ);
    CHECK(seq.tokens[i + 1].kind == TokenKind::kI);
    CHECK(seq.tokens[i + 1].vocab_id == static_cast<int>(xs[g].item_id));
    CHECK(seq.tokens[i + 2].kind == TokenKind::kF);
    CHECK(seq.tokens[i + 2].vocab_id == xs[g].feedback);
    i += 3;
    ++g;
  }
  return g;
}

}  // namespace

TEST_CASE("token grammar and placeholder count over random users") {
  Rng rng(21);
  auto pool = small_pool(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto xs = random_interactions(rng, 0, 1 + uniform_index(rng, 15), 20);
    auto o = opts(0.5);
    Rng srng(trial);
    auto seq = assemble_sequence(xs, o, pool, srng);
    CHECK(check_grammar(seq, xs, o) == xs.size());
    std::size_t want = 0;
    for (const auto& a : xs) want += a.delta || a.triggering_query.has_value();
    CHECK(seq.placeholders.size() == want);
    for (std::size_t k = 1; k < seq.size(); ++k)
      CHECK(seq.tokens[k - 1].timestamp <= seq.tokens[k].timestamp);
    for (const auto& ph : seq.placeholders) CHECK(seq.tokens[ph.pos].kind == TokenKind::kQ);
    for (const auto& t : seq.tokens)
      if (t.q_valid) CHECK(t.q.kind == PayloadKind::kSearchQuery);
  }
}

TEST_CASE("search-triggered Q carries the query embedding") {
  Interaction a;
  a.item_id = 3;
  a.timestamp = 4;
  a.triggering_query = "red running shoes";
  Rng rng(1);
  auto seq = assemble_sequence(std::span<const Interaction>(&a, 1), opts(0.0), QueryPool{}, rng);
  REQUIRE(seq.size() == 4);
  const auto& q = seq.tokens[1];
  CHECK(q.q.kind == PayloadKind::kSearchQuery);
  CHECK(q.q_valid);
  CHECK(q.q.embedding == embed_query("red running shoes", 8));
  REQUIRE(seq.placeholders.size() == 1);
  CHECK(seq.placeholders[0].search);
  CHECK(seq.placeholders[0].query_embedding == q.q.embedding);
}

TEST_CASE("beta 0 leaves every non-search Q universal") {
  Rng rng(2);
  auto pool = small_pool(8);
  auto xs = random_interactions(rng, 0, 30, 10);
  Rng srng(5);
  auto seq = assemble_sequence(xs, opts(0.0), pool, srng);
  for (const auto& t : seq.tokens)
    if (t.kind == TokenKind::kQ && !t.q_valid) CHECK(t.q.kind == PayloadKind::kUniversal);
}

TEST_CASE("beta 1 fills every non-search Q from the pool, deterministically") {
  Rng rng(3);
  auto pool = small_pool(8);
  auto xs = random_interactions(rng, 0, 30, 10);
  Rng r1(9), r2(9);
  auto a = assemble_sequence(xs, opts(1.0), pool, r1);
  auto b = assemble_sequence(xs, opts(1.0), pool, r2);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& t = a.tokens[k];
    if (t.kind != TokenKind::kQ || t.q_valid) continue;
    CHECK(t.q.kind == PayloadKind::kSearchQuery);
    REQUIRE(t.q.pool_entry.has_value());
    CHECK(t.q.embedding == pool.entries()[*t.q.pool_entry].embedding);
    CHECK(b.tokens[k].q.pool_entry == t.q.pool_entry);
  }
}

TEST_CASE("ablation switches drop S tokens and search queries") {
  Rng rng(4);
  auto xs = random_interactions(rng, 0, 20, 10);
  auto o = opts(0.0);
  o.scenario_tokens = false;
  o.search_queries = false;
  Rng srng(1);
  auto seq = assemble_sequence(xs, o, QueryPool{}, srng);
  CHECK(seq.size() == 3 * xs.size());
  std::size_t want = 0;
  for (const auto& t : seq.tokens) {
    CHECK(t.kind != TokenKind::kS);
    CHECK_FALSE(t.q_valid);
  }
  for (const auto& a : xs) want += a.delta;
  CHECK(seq.placeholders.size() == want);
}

TEST_CASE("empty input gives an empty sequence; unsorted input is rejected") {
  Rng rng(1);
  CHECK(assemble_sequence({}, opts(0.5), QueryPool{}, rng).size() == 0);
  std::vector<Interaction> xs(2);
  xs[0].timestamp = 5;
  xs[1].timestamp = 4;
  CHECK_THROWS_AS(assemble_sequence(xs, opts(0.5), QueryPool{}, rng), ValidationError);
}

TEST_CASE("suffix truncation keeps the newest tokens") {
  Rng rng(6);
  auto xs = random_interactions(rng, 0, 20, 10, 1.0);
  auto o = opts(0.0);
  Rng r1(1), r2(1);
  auto full = assemble_sequence(xs, o, QueryPool{}, r1);
  o.max_len = 10;
  auto cut = assemble_sequence(xs, o, QueryPool{}, r2);
  REQUIRE(cut.size() == 10);
  const std::size_t off = full.size() - 10;
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(cut.tokens[k].kind == full.tokens[k + off].kind);
    CHECK(cut.tokens[k].vocab_id == full.tokens[k + off].vocab_id);
  }
  for (const auto& ph : cut.placeholders) CHECK(cut.tokens[ph.pos].kind == TokenKind::kQ);
}

TEST_CASE("prediction sequences end in one placeholder") {
  Rng rng(7);
  auto xs = random_interactions(rng, 0, 12, 10);
  Interaction target = xs.back();
  xs.pop_back();
  auto o = opts(0.5);
  o.ranking_mode = true;
  Rng srng(2);
  auto seq = assemble_for_prediction(xs, target, o, small_pool(8), srng);
  REQUIRE(seq.placeholders.size() == 1);
  CHECK(seq.placeholders[0].pos == seq.size() - 1);
  CHECK(seq.placeholders[0].target == target.item_id);
  CHECK(seq.tokens.back().q.kind == PayloadKind::kTargetCandidates);
}

TEST_CASE("attach_candidates: sizes, distinctness, positives") {
  Rng rng(8);
  auto xs = random_interactions(rng, 0, 10, 30, 1.0);
  Rng srng(3);
  auto seq = assemble_sequence(xs, opts(0.0), QueryPool{}, srng);
  NegativeSource src = [](const Placeholder&, ItemId pos, std::size_t c, Rng& r) {
    std::vector<ItemId> out;
    while (out.size() < c) {
      ItemId i = static_cast<ItemId>(uniform_index(r, 30));
      if (i != pos && std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
    }
    return out;
  };
  Rng crng(4);
  auto groups = attach_candidates(seq, src, 4, crng);
  CHECK(groups.size() == seq.placeholders.size());
  std::size_t total = 0;
  for (const auto& g : groups) {
    CHECK(g.candidates.size() == 5);
    CHECK(std::set<ItemId>(g.candidates.begin(), g.candidates.end()).size() == 5);
    CHECK(g.candidates[g.positive_index] == *seq.placeholders[g.placeholder].target);
    CHECK(g.placeholder_pos == seq.placeholders[g.placeholder].pos);
    total += g.candidates.size();
  }
  CHECK(total == 5 * seq.placeholders.size());

  Rng crng0(4);
  for (const auto& g : attach_candidates(seq, src, 0, crng0)) {
    CHECK(g.candidates.size() == 1);
    CHECK(g.positive_index == 0);
  }
}

TEST_CASE("attach_candidates draws available items on a churn corpus") {
  GenConfig g;
  g.n_users = 20;
  g.n_items = 60;
  g.horizon = 300;
  g.churn_rate = 0.8;
  g.sessions_min = 3;
  g.sessions_max = 5;
  g.seed = 4;
  Corpus c = generate_corpus(g);
  LifecycleIndex index(c.catalog);
  SamplerConfig sc;
  sc.c = 3;
  NegativeSampler sampler(c.catalog, index, sc);
  NegativeSource src = [&](const Placeholder& ph, ItemId pos, std::size_t n, Rng& r) {
    return sampler.draw(ph.timestamp, pos, n, r);
  };
  std::size_t checked = 0;
  for (const auto& list : c.users) {
    Rng r(1);
    auto seq = assemble_sequence(list, opts(0.0), QueryPool{}, r);
    for (const auto& grp : attach_candidates(seq, src, 3, r))
      for (ItemId i : grp.candidates) {
        CHECK(c.catalog.availability(i, grp.draw_time));
        ++checked;
      }
  }
  CHECK(checked > 0);
}

TEST_CASE("dump uses the documented grammar") {
  auto text = dump_sequence(qdrec::worked_example_sequence());
  CHECK(text.rfind("S(0)\nQ(universal)\nI(", 0) == 0);
  CHECK(text.find("Q(search)") != std::string::npos);
}
