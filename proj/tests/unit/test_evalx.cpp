// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "qdrec/error.hpp"
#include "qdrec/evalx.hpp"
#include "qdrec/rng.hpp"

using namespace qdrec;

namespace {

GenConfig sparse_gen(std::uint64_t seed) {
  GenConfig g;
  g.n_users = 400;
  g.n_items = 300;
  g.horizon = 600;
  g.sessions_min = 3;
  g.sessions_max = 5;
  g.churn_rate = 0.0;
  g.seed = seed;
  return g;
}

double hash_score(std::uint32_t user, ItemId item) {
  const std::string key = std::to_string(user) + ":" + std::to_string(item);
  return static_cast<double>(fnv1a64(key) >> 11) * 0x1.0p-53;
}

CaseScorer random_scorer() {
  return [](const EvalCase& c, std::span<const ItemId> items) {
    std::vector<double> s;
    for (ItemId i : items) s.push_back(hash_score(c.user, i));
    return s;
  };
}

bool same_metrics(const MetricTable& a, const MetricTable& b) {
  return a.hr1 == b.hr1 && a.hr5 == b.hr5 && a.hr10 == b.hr10 && a.ndcg5 == b.ndcg5 &&
         a.ndcg10 == b.ndcg10 && a.cases == b.cases && a.skipped == b.skipped;
}

}  // namespace

TEST_CASE("HR and NDCG exact values") {
  std::vector<ItemId> ranked{7, 3, 9, 1, 4, 8};
  CHECK(hr_at_k(ranked, 7, 1) == 1);
  CHECK(ndcg_at_k(ranked, 7, 1) == 1.0);
  CHECK(hr_at_k(ranked, 9, 2) == 0);
  CHECK(hr_at_k(ranked, 9, 3) == 1);
  CHECK(ndcg_at_k(ranked, 9, 3) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ndcg_at_k(ranked, 3, 5) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
  CHECK(ndcg_at_k(ranked, 8, 10) == doctest::Approx(1.0 / std::log2(7.0)).epsilon(1e-15));
  CHECK(hr_at_k(ranked, 42, 10) == 0);
  CHECK(ndcg_at_k(ranked, 42, 10) == 0.0);
  CHECK_THROWS_AS(hr_at_k(ranked, 7, 0), ValidationError);
  CHECK_THROWS_AS(ndcg_at_k(ranked, 7, 0), ValidationError);
}

TEST_CASE("rank_of agrees with rank_items and a scan") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 40);
    std::vector<ItemId> items(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      items[i] = static_cast<ItemId>(5 * n - 3 * i);
      scores[i] = static_cast<double>(uniform_index(rng, 5));
    }
    const auto ranked = rank_items(items, scores);
    for (std::size_t p = 0; p < n; ++p) {
      const auto pos = std::find(ranked.begin(), ranked.end(), items[p]) - ranked.begin();
      CHECK(rank_of(items, scores, p) == static_cast<std::size_t>(pos) + 1);
      for (std::size_t k : {1, 5, 10}) {
        const int hr = hr_at_k(ranked, items[p], k);
        CHECK(hr == (static_cast<std::size_t>(pos) < k ? 1 : 0));
        CHECK((ndcg_at_k(ranked, items[p], k) > 0.0) == (hr == 1));
      }
    }
  }
  std::vector<ItemId> two{1, 2};
  std::vector<double> one{0.5};
  CHECK_THROWS_AS(rank_items(two, one), ValidationError);
}

TEST_CASE("leave-one-out split rules") {
  Corpus c;
  for (std::uint32_t u = 0; u < 4; ++u) {
    std::vector<Interaction> xs;
    for (std::uint32_t k = 0; k < u + 1; ++k) {
      Interaction a;
      a.user_id = u;
      a.item_id = k;
      a.timestamp = k;
      a.group_id = k;
      xs.push_back(a);
    }
    c.users.push_back(xs);
  }
  const auto s = leave_one_out(c);
  CHECK(s[0].train.size() == 1);
  CHECK_FALSE(s[1].valid);
  CHECK(s[1].train.size() == 2);
  CHECK(s[2].train.size() == 1);
  CHECK(s[2].valid->item_id == 1);
  CHECK(s[2].test->item_id == 2);
  CHECK(s[3].train.size() == 2);

  const auto valid = eval_cases(s, EvalSplit::kValid);
  const auto test = eval_cases(s, EvalSplit::kTest);
  REQUIRE(valid.size() == 2);
  REQUIRE(test.size() == 2);
  CHECK(valid[1].user == 3);
  CHECK(valid[1].history.size() == 2);
  CHECK(valid[1].target.item_id == 2);
  CHECK(test[1].history.size() == 3);
  CHECK(test[1].target.item_id == 3);
}

TEST_CASE("a perfect scorer reaches HR@1 = 1 under both protocols") {
  Corpus c = generate_corpus(sparse_gen(1));
  const auto splits = leave_one_out(c);
  const auto cases = eval_cases(splits, EvalSplit::kTest);
  CaseScorer perfect = [](const EvalCase& k, std::span<const ItemId> items) {
    std::vector<double> s;
    for (ItemId i : items) s.push_back(i == k.target.item_id ? 1.0 : 0.0);
    return s;
  };
  const MetricTable m = evaluate_sampled(perfect, cases, c, 99, 3);
  CHECK(m.hr1 == 1.0);
  CHECK(m.ndcg10 == 1.0);
  CHECK(m.mean_candidates == 100.0);
  LifecycleIndex idx(c.catalog);
  const MetricTable a = evaluate_aligned(perfect, cases, idx);
  CHECK(a.hr1 == 1.0);
  CHECK(a.ndcg5 == 1.0);
}

TEST_CASE("random scores give HR@10 near 0.1 on 100 candidates") {
  Corpus c = generate_corpus(sparse_gen(2));
  const auto cases = eval_cases(leave_one_out(c), EvalSplit::kTest);
  const MetricTable m = evaluate_sampled(random_scorer(), cases, c, 99, 8);
  REQUIRE(m.cases > 300);
  CHECK(m.mean_candidates == 100.0);
  const double sigma = std::sqrt(0.1 * 0.9 / static_cast<double>(m.cases));
  CHECK(std::abs(m.hr10 - 0.1) <= 3.0 * sigma);
  const double sigma1 = std::sqrt(0.01 * 0.99 / static_cast<double>(m.cases));
  CHECK(std::abs(m.hr1 - 0.01) <= 3.0 * sigma1 + 1e-12);
}

TEST_CASE("sampled negatives avoid the user's items and are deterministic") {
  Corpus c = generate_corpus(sparse_gen(3));
  const auto cases = eval_cases(leave_one_out(c), EvalSplit::kValid);
  bool clean = true;
  CaseScorer probe = [&](const EvalCase& k, std::span<const ItemId> items) {
    std::size_t hits = 0;
    for (ItemId i : items) {
      bool seen = false;
      for (const auto& a : c.users[k.user]) seen = seen || a.item_id == i;
      hits += i == k.target.item_id;
      if (seen && i != k.target.item_id) clean = false;
    }
    if (hits != 1) clean = false;
    return std::vector<double>(items.size(), 0.0);
  };
  evaluate_sampled(probe, cases, c, 99, 1);
  CHECK(clean);
  const auto a = evaluate_sampled(random_scorer(), cases, c, 99, 4, 1);
  const auto b = evaluate_sampled(random_scorer(), cases, c, 99, 4, 3);
  CHECK(same_metrics(a, b));
  CHECK(a.loss == b.loss);
}

TEST_CASE("aligned protocol ranks the full online set") {
  GenConfig g = sparse_gen(4);
  g.churn_rate = 0.6;
  g.n_users = 120;
  g.n_items = 80;
  GeneratedWorld w = generate_world(g);
  const Corpus& c = w.corpus;
  LifecycleIndex idx(c.catalog);
  const auto cases = eval_cases(leave_one_out(c), EvalSplit::kTest);
  CaseScorer oracle = [&](const EvalCase& k, std::span<const ItemId> items) {
    std::vector<double> s;
    for (ItemId i : items) s.push_back(w.preference_logit(k.user, i, k.target.timestamp));
    return s;
  };
  const MetricTable m = evaluate_aligned(oracle, cases, idx);

  double hr5 = 0.0, ndcg10 = 0.0, cand = 0.0;
  for (const auto& k : cases) {
    const Timestamp t = k.target.timestamp;
    std::vector<ItemId> online;
    for (ItemId i = 0; i < c.catalog.size(); ++i)
      if (c.catalog.availability(i, t)) online.push_back(i);
    cand += static_cast<double>(online.size());
    std::vector<double> s;
    for (ItemId i : online) s.push_back(w.preference_logit(k.user, i, t));
    std::vector<std::size_t> order(online.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return s[a] != s[b] ? s[a] > s[b] : online[a] < online[b];
    });
    std::size_t rank = 0;
    for (std::size_t r = 0; r < order.size(); ++r)
      if (online[order[r]] == k.target.item_id) rank = r + 1;
    REQUIRE(rank > 0);
    hr5 += rank <= 5;
    if (rank <= 10) ndcg10 += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  const double n = static_cast<double>(cases.size());
  CHECK(m.cases == cases.size());
  CHECK(m.mean_candidates == doctest::Approx(cand / n).epsilon(1e-12));
  CHECK(m.hr5 == doctest::Approx(hr5 / n).epsilon(1e-12));
  CHECK(m.ndcg10 == doctest::Approx(ndcg10 / n).epsilon(1e-12));
  CHECK(m.mean_candidates < static_cast<double>(c.catalog.size()));

  EvalCase bad = cases.front();
  bad.target.timestamp = c.catalog.horizon() + 5;
  std::vector<EvalCase> bads{bad};
  CHECK_THROWS_AS(evaluate_aligned(oracle, bads, idx), ValidationError);
}

TEST_CASE("aligned equals the whole catalog when nothing churns") {
  Corpus c = generate_corpus(sparse_gen(5));
  LifecycleIndex idx(c.catalog);
  const auto cases = eval_cases(leave_one_out(c), EvalSplit::kTest);
  const MetricTable m = evaluate_aligned(random_scorer(), cases, idx);
  CHECK(m.mean_candidates == static_cast<double>(c.catalog.size()));
}

TEST_CASE("metrics are invariant under monotone score transforms") {
  Corpus c = generate_corpus(sparse_gen(6));
  const auto cases = eval_cases(leave_one_out(c), EvalSplit::kTest);
  CaseScorer base = random_scorer();
  CaseScorer mono = [base](const EvalCase& k, std::span<const ItemId> items) {
    auto s = base(k, items);
    for (double& x : s) x = 3.0 * std::exp(2.0 * x) + 1.0;
    return s;
  };
  CHECK(same_metrics(evaluate_sampled(base, cases, c, 99, 2), evaluate_sampled(mono, cases, c, 99, 2)));
}

TEST_CASE("popularity counts the train split only") {
  Corpus c = generate_corpus(sparse_gen(7));
  const auto splits = leave_one_out(c);
  const auto counts = train_popularity(splits, c.catalog.size());
  double total = 0.0, train_total = 0.0;
  for (double x : counts) total += x;
  for (const auto& s : splits) train_total += static_cast<double>(s.train.size());
  CHECK(total == train_total);
  auto scorer = popularity_scorer(counts);
  std::vector<ItemId> items{0, 1, 2};
  const auto s = scorer(EvalCase{}, items);
  CHECK(s == std::vector<double>{counts[0], counts[1], counts[2]});
}

TEST_CASE("metric rows and parallel_for") {
  MetricTable m;
  m.loss = 1.5;
  m.hr1 = 0.25;
  CHECK(format_metric_row(3, "test:sampled", m).rfind("3,test:sampled,1.5,0.25,0,0,0,0", 0) == 0);
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw ValidationError("boom");
                  }),
                  ValidationError);
}
