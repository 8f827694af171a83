// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "doctest.h"
#include "qdrec/dsfnet.hpp"
#include "qdrec/error.hpp"
#include "qdrec/kernels.hpp"
#include "qdrec/scoring.hpp"
#include "support/gen.hpp"

using namespace qdrec;
using qdrec::testing::jitter;
using qdrec::testing::small_config;

namespace {

double max_diff(const CandidateScores& a, const CandidateScores& b) {
  REQUIRE(a.logits.size() == b.logits.size());
  double m = 0.0;
  for (std::size_t g = 0; g < a.logits.size(); ++g) {
    REQUIRE(a.logits[g].size() == b.logits[g].size());
    for (std::size_t i = 0; i < a.logits[g].size(); ++i)
      m = std::max(m, std::abs(a.logits[g][i] - b.logits[g][i]));
  }
  return m;
}

struct Fixture {
  ModelConfig cfg;
  ModelParams p;
  ScoringCase sc;
};

Fixture golden_fixture() {
  Fixture f;
  f.cfg = small_config(8, 2, 2, 2026);
  f.p = init_params(f.cfg);
  Rng rng(2026);
  jitter(f.p, rng, 0.2);
  f.sc = random_scoring_case(16, 2, 3, f.cfg, rng);
  return f;
}

// Naive-path logits of golden_fixture(), frozen.
const double kGolden[2][3] = {
    {0.0040213124715345345, 0.047441130387762306, -0.0041382507697206852},
    {-0.0065062366559819644, 0.019401882367290495, 0.059857976657570838},
};

}  // namespace

TEST_CASE("golden fixture: naive logits are frozen and the fast paths agree") {
  Fixture f = golden_fixture();
  auto naive = score_candidates_naive(f.sc.seq, f.sc.groups, f.p, f.cfg);
  REQUIRE(naive.logits.size() == 2);
  for (std::size_t g = 0; g < 2; ++g) {
    REQUIRE(naive.logits[g].size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      if (std::getenv("QDREC_PRINT_GOLDEN")) std::printf("%.17g\n", naive.logits[g][i]);
      CHECK(naive.logits[g][i] == doctest::Approx(kGolden[g][i]).epsilon(1e-12));
    }
  }
  CHECK(max_diff(naive, score_candidates_kv(f.sc.seq, f.sc.groups, f.p, f.cfg)) <= 1e-6);
  CHECK(max_diff(naive, score_candidates_diag(f.sc.seq, f.sc.groups, f.p, f.cfg)) <= 1e-6);
}

TEST_CASE("three paths agree over random configurations") {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t d = 2 + 2 * uniform_index(rng, 8);
    ModelConfig cfg = small_config(d, 1 + uniform_index(rng, 3), 1 + uniform_index(rng, 2), trial);
    cfg.relative_bias = uniform01(rng) < 0.8;
    cfg.dsfnet = uniform01(rng) < 0.8;
    cfg.session_mask = uniform01(rng) < 0.8;
    ModelParams p = init_params(cfg);
    jitter(p, rng, 0.1);
    const std::size_t j = uniform_index(rng, 5);
    const std::size_t cprime = 1 + uniform_index(rng, 6);
    const std::size_t n = 3 * j + 1 + uniform_index(rng, 40);
    auto sc = random_scoring_case(n, j, cprime, cfg, rng);
    auto naive = score_candidates_naive(sc.seq, sc.groups, p, cfg);
    CHECK(max_diff(naive, score_candidates_kv(sc.seq, sc.groups, p, cfg)) <= 1e-6);
    CHECK(max_diff(naive, score_candidates_diag(sc.seq, sc.groups, p, cfg)) <= 1e-6);
  }
}

TEST_CASE("a group of one equals the sequence with the positive in place") {
  ModelConfig cfg = small_config(4, 2, 2, 3);
  ModelParams p = init_params(cfg);
  Rng rng(3);
  jitter(p, rng, 0.2);
  auto sc = random_scoring_case(12, 1, 1, cfg, rng);
  auto naive = score_candidates_naive(sc.seq, sc.groups, p, cfg);
  REQUIRE(naive.logits[0].size() == 1);

  const auto& g = sc.groups[0];
  const auto& ph = sc.seq.placeholders[g.placeholder];
  Matrix x = token_features(sc.seq, p);
  Matrix f = candidate_feature(ph, g.candidates[0], p);
  std::copy(f.row(0).begin(), f.row(0).end(), x.row(g.placeholder_pos).begin());
  Matrix h = stack_forward(x, sequence_mask(sc.seq, cfg), sequence_coords(sc.seq), p, cfg);
  const std::size_t idx[] = {g.placeholder_pos};
  Matrix o = dsfnet_forward(select_rows(h, idx), scenario_context(ph, sc.seq.user, p), p.dsf);
  CHECK(naive.logits[0][0] == doctest::Approx(ranking_head(o, p)(0, 0)).epsilon(1e-12));
}

TEST_CASE("duplicate candidates get identical logits") {
  ModelConfig cfg = small_config(4, 2, 2, 4);
  ModelParams p = init_params(cfg);
  Rng rng(4);
  jitter(p, rng, 0.2);
  auto sc = random_scoring_case(15, 1, 3, cfg, rng);
  sc.groups[0].candidates[1] = sc.groups[0].candidates[0];
  for (auto* fn : {&score_candidates_naive, &score_candidates_kv, &score_candidates_diag}) {
    auto s = (*fn)(sc.seq, sc.groups, p, cfg);
    CHECK(s.logits[0][0] == s.logits[0][1]);
  }
}

TEST_CASE("no groups: stage 2 is a no-op") {
  ModelConfig cfg = small_config(4, 2, 2, 5);
  ModelParams p = init_params(cfg);
  Rng rng(5);
  auto sc = random_scoring_case(10, 0, 1, cfg, rng);
  auto kv = score_candidates_kv(sc.seq, {}, p, cfg);
  CHECK(kv.logits.empty());
  CHECK(kv.flops.stage1 > 0);
  CHECK(kv.flops.stage2 == 0);
  CHECK(score_candidates_diag(sc.seq, {}, p, cfg).logits.empty());
}

TEST_CASE("single candidate: diag path equals naive to rounding") {
  ModelConfig cfg = small_config(4, 1, 1, 6);
  ModelParams p = init_params(cfg);
  Rng rng(6);
  jitter(p, rng, 0.2);
  auto sc = random_scoring_case(4, 1, 1, cfg, rng);
  auto diag = score_candidates_diag(sc.seq, sc.groups, p, cfg);
  auto naive = score_candidates_naive(sc.seq, sc.groups, p, cfg);
  CHECK(std::abs(diag.logits[0][0] - naive.logits[0][0]) <= 1e-12);
}

TEST_CASE("KV cache is unchanged by stage 2") {
  ModelConfig cfg = small_config(4, 2, 2, 7);
  ModelParams p = init_params(cfg);
  Rng rng(7);
  jitter(p, rng, 0.2);
  auto sc = random_scoring_case(20, 2, 3, cfg, rng);
  KVCache before = build_kv_cache(sc.seq, p, cfg);
  score_candidates_kv(sc.seq, sc.groups, p, cfg);
  score_candidates_diag(sc.seq, sc.groups, p, cfg);
  KVCache after = build_kv_cache(sc.seq, p, cfg);
  for (std::size_t l = 0; l < before.k.size(); ++l) {
    CHECK(before.k[l] == after.k[l]);
    CHECK(before.v[l] == after.v[l]);
    CHECK(before.k[l].rows() == sc.seq.size());
    CHECK(before.k[l].cols() == cfg.d);
  }
}

TEST_CASE("naive over kv MAC ratio grows with N") {
  ModelConfig cfg = small_config(8, 2, 2, 8);
  cfg.n_items = 40;
  ModelParams p = init_params(cfg);
  double last = 0.0;
  for (std::size_t n : {32, 64, 128, 256}) {
    Rng rng(n);
    auto sc = random_scoring_case(n, 8, 6, cfg, rng);
    const double naive = static_cast<double>(score_candidates_naive(sc.seq, sc.groups, p, cfg).flops.total());
    const double kv = static_cast<double>(score_candidates_kv(sc.seq, sc.groups, p, cfg).flops.total());
    const double ratio = naive / kv;
    CHECK(ratio > last);
    last = ratio;
  }
}

TEST_CASE("diag candidate block is linear in the candidate count") {
  ModelConfig cfg = small_config(8, 2, 2, 9);
  cfg.n_items = 40;
  ModelParams p = init_params(cfg);
  Rng rng(9);
  auto sc = random_scoring_case(64, 8, 16, cfg, rng);
  auto kv = score_candidates_kv(sc.seq, sc.groups, p, cfg);
  auto diag = score_candidates_diag(sc.seq, sc.groups, p, cfg);
  const std::uint64_t c = 8 * 16, d = cfg.d, h = cfg.layers;
  // kv spends C*C*d on scores and C*C*d on values per layer for the block;
  // diag spends one dot and one axpy of width d per candidate.
  CHECK(kv.flops.stage2 - diag.flops.stage2 == h * (2 * c * c * d - 2 * c * d));
  const std::uint64_t diag_block = h * 2 * c * d;
  CHECK(diag_block <= 2 * h * c * d);
  CHECK(diag_block * 16 < h * c * c * d);
}

TEST_CASE("complexity threshold values") {
  CHECK(complexity_threshold_value(1, 1) == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0));
  CHECK(complexity_threshold(3, 1, 1));
  CHECK(complexity_threshold_value(8, 6) == doctest::Approx(24.0));
  CHECK(complexity_threshold(100, 8, 6));
  for (std::size_t j = 1; j < 6; ++j)
    for (std::size_t c = 1; c < 20; ++c)
      for (std::size_t n = 1; n <= j; ++n) CHECK_FALSE(complexity_threshold(n, j, c));
}

TEST_CASE("retrieval scores") {
  Matrix emb(100, 4);
  for (std::size_t i = 0; i < 4; ++i) emb(i, i) = 1.0;
  std::vector<double> o{0, 0, 1, 0};
  std::vector<ItemId> items{0, 1, 2, 3};
  auto s = retrieval_scores(o, emb, items);
  CHECK(std::max_element(s.begin(), s.end()) - s.begin() == 2);
  CHECK_THROWS_AS(retrieval_scores(o, emb, std::vector<ItemId>{}), ValidationError);

  Rng rng(10);
  Matrix e = qdrec::testing::random_matrix(100, 4, rng);
  std::vector<double> q{0.3, -0.2, 0.9, 0.1};
  std::vector<ItemId> all(100);
  std::iota(all.begin(), all.end(), 0);
  auto sc = retrieval_scores(q, e, all);
  std::vector<std::pair<double, ItemId>> brute;
  for (ItemId i = 0; i < 100; ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < 4; ++k) v += q[k] * e(i, k);
    brute.push_back({-v, i});
    CHECK(sc[i] == doctest::Approx(v).epsilon(1e-14));
  }
  std::sort(brute.begin(), brute.end());
  std::vector<ItemId> top(all);
  std::sort(top.begin(), top.end(), [&](ItemId a, ItemId b) { return sc[a] > sc[b]; });
  for (std::size_t k = 0; k < 10; ++k) CHECK(top[k] == brute[k].second);
}

TEST_CASE("scoring rejects groups on valid-key positions") {
  ModelConfig cfg = small_config(4, 1, 1, 11);
  ModelParams p = init_params(cfg);
  Rng rng(11);
  auto sc = random_scoring_case(10, 1, 2, cfg, rng);
  sc.seq.tokens[sc.groups[0].placeholder_pos].q_valid = true;
  CHECK_THROWS_AS(score_candidates_kv(sc.seq, sc.groups, p, cfg), ValidationError);
}
