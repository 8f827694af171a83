// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include "doctest.h"
#include "qdrec/catalog.hpp"
#include "qdrec/error.hpp"
#include "qdrec/rng.hpp"

using namespace qdrec;

namespace {

ItemRecord rec(ItemId id, std::vector<Interval> life, double pop = 1.0) {
  ItemRecord r;
  r.item_id = id;
  r.lifecycle = std::move(life);
  r.popularity = pop;
  r.attribute_tokens = {static_cast<int>(id), 1, 2};
  return r;
}

ItemCatalog random_catalog(std::size_t n, Rng& rng, Timestamp horizon) {
  std::vector<ItemRecord> items;
  for (ItemId i = 0; i < n; ++i) {
    std::vector<Interval> life;
    Timestamp t = static_cast<Timestamp>(uniform_index(rng, horizon / 2));
    const int parts = 1 + static_cast<int>(uniform_index(rng, 3));
    for (int p = 0; p < parts && t < horizon - 1; ++p) {
      Timestamp len = 1 + static_cast<Timestamp>(uniform_index(rng, horizon / 4));
      Timestamp off = std::min(horizon, t + len);
      life.push_back({t, off});
      t = off + 1 + static_cast<Timestamp>(uniform_index(rng, 20));
    }
    items.push_back(rec(i, life, 1.0 + uniform_index(rng, 9)));
  }
  return ItemCatalog(std::move(items));
}

}  // namespace

TEST_CASE("availability uses half-open intervals") {
  ItemCatalog cat({rec(0, {{10, 20}}), rec(1, {{10, 20}, {30, 40}})});
  CHECK(cat.availability(0, 15));
  CHECK_FALSE(cat.availability(0, 20));
  CHECK(cat.availability(0, 10));
  CHECK_FALSE(cat.availability(1, 25));
  CHECK(cat.availability(1, 35));
  CHECK_THROWS_AS(cat.availability(7, 1), LookupError);
}

TEST_CASE("available_set on a two-item catalog") {
  ItemCatalog cat({rec(0, {{0, 5}}), rec(1, {{3, 9}})});
  LifecycleIndex idx(cat);
  auto s4 = idx.available_set(4);
  CHECK(std::vector<ItemId>(s4.begin(), s4.end()) == std::vector<ItemId>{0, 1});
  auto s7 = idx.available_set(7);
  CHECK(std::vector<ItemId>(s7.begin(), s7.end()) == std::vector<ItemId>{1});
  CHECK(idx.available_set(-1).empty());
  CHECK(idx.available_set(1000).empty());
}

TEST_CASE("index agrees with a per-item scan over 1000 random items") {
  Rng rng(77);
  const Timestamp horizon = 400;
  ItemCatalog cat = random_catalog(1000, rng, horizon);
  LifecycleIndex idx(cat);
  for (Timestamp t = 0; t < horizon; t += 7) {
    std::vector<ItemId> want;
    for (const auto& r : cat.items()) {
      bool on = false;
      for (const auto& iv : r.lifecycle) on = on || (iv.on <= t && t < iv.off);
      if (on) want.push_back(r.item_id);
    }
    auto got = idx.available_set(t);
    CHECK(std::vector<ItemId>(got.begin(), got.end()) == want);
  }
}

TEST_CASE("adding an interval never removes members") {
  Rng rng(5);
  ItemCatalog cat = random_catalog(60, rng, 200);
  auto items = std::vector<ItemRecord>(cat.items().begin(), cat.items().end());
  LifecycleIndex before(cat);
  for (auto& r : items) {
    Timestamp end = r.lifecycle.back().off;
    if (end + 5 < 300) r.lifecycle.push_back({end + 2, end + 5});
  }
  ItemCatalog grown(items);
  LifecycleIndex after(grown);
  for (Timestamp t = 0; t < 200; ++t) {
    auto a = before.available_set(t);
    auto b = after.available_set(t);
    std::set<ItemId> bs(b.begin(), b.end());
    for (ItemId i : a) CHECK(bs.count(i) == 1);
  }
}

TEST_CASE("catalog rejects malformed lifecycles") {
  CHECK_THROWS_AS(ItemCatalog({rec(0, {{5, 5}})}), ValidationError);
  CHECK_THROWS_AS(ItemCatalog({rec(0, {{0, 5}, {3, 8}})}), ValidationError);
  CHECK_THROWS_AS(ItemCatalog({rec(1, {{0, 5}})}), ValidationError);
}

TEST_CASE("embed_query is deterministic and unit norm") {
  auto a = embed_query("hello", 32);
  CHECK(a == embed_query("hello", 32));
  double n = 0.0;
  for (double v : a) n += v * v;
  CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
  CHECK_THROWS_AS(embed_query("", 32), ValidationError);
  CHECK_THROWS_AS(embed_query("   ", 32), ValidationError);
  CHECK_THROWS_AS(embed_query("x", 0), ValidationError);
}

TEST_CASE("distinct texts embed nearly orthogonally") {
  Rng rng(3);
  double mean_abs = 0.0;
  int over = 0;
  for (int i = 0; i < 1000; ++i) {
    auto a = embed_query("w" + std::to_string(rng()), 32);
    auto b = embed_query("v" + std::to_string(rng()), 32);
    double c = 0.0;
    for (std::size_t k = 0; k < 32; ++k) c += a[k] * b[k];
    mean_abs += std::abs(c);
    if (std::abs(c) >= 0.9) ++over;
  }
  mean_abs /= 1000.0;
  CHECK(over == 0);
  // E|cos| for random unit vectors in 32 dims is about sqrt(2/(pi*32)) = 0.141.
  CHECK(mean_abs < 0.2);
}

TEST_CASE("query pool covers every generated kind") {
  ItemCatalog one({rec(0, {{0, 10}})});
  auto pool = build_query_pool(one, {}, 1, 16);
  CHECK(pool.size() >= 4);
  std::set<QueryKind> kinds;
  for (const auto& e : pool) {
    kinds.insert(e.kind);
    double n = 0.0;
    for (double v : e.embedding) n += v * v;
    CHECK(std::abs(n - 1.0) < 1e-6);
  }
  CHECK(kinds == std::set<QueryKind>{QueryKind::kItemInfo, QueryKind::kDescription,
                                     QueryKind::kKeyword, QueryKind::kMimicExpression});

  std::vector<std::string> q{"red shoes", "cheap phone"};
  auto with = build_query_pool(one, q, 1, 16);
  std::size_t user = 0;
  for (const auto& e : with) user += e.kind == QueryKind::kUserQuery;
  CHECK(user == 2);
}

TEST_CASE("query pool is a pure function of its inputs") {
  Rng rng(1);
  ItemCatalog cat = random_catalog(20, rng, 100);
  std::vector<std::string> q{"a b", "c"};
  auto p1 = build_query_pool(cat, q, 9, 8);
  auto p2 = build_query_pool(cat, q, 9, 8);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].text == p2[i].text);
    CHECK(p1[i].embedding == p2[i].embedding);
    CHECK(p1[i].entry_id == i);
  }
}

TEST_CASE("catalog text round trip and truncation") {
  Rng rng(4);
  ItemCatalog cat = random_catalog(15, rng, 100);
  CHECK(parse_catalog(format_catalog(cat)) == cat);
  std::string text = format_catalog(cat);
  text.pop_back();  // drop the final newline
  text.resize(text.size() - 2);
  try {
    parse_catalog(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("last valid line") != std::string::npos);
  }
}
