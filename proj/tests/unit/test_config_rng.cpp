// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include "doctest.h"
#include "qdrec/config.hpp"
#include "qdrec/error.hpp"
#include "qdrec/rng.hpp"

using qdrec::KvConfig;

TEST_CASE("config parses sections, comments and typed values") {
  auto c = KvConfig::parse("# top\n[gen]\nn_users = 12\nchurn_rate=0.5\n\n[train]\nflag = true\nname = rns\n");
  CHECK(c.get("gen", "n_users", 0) == 12);
  CHECK(c.get("gen", "churn_rate", 0.0) == 0.5);
  CHECK(c.get("train", "flag", false));
  CHECK(c.get("train", "name", "x") == "rns");
  CHECK(c.get("train", "missing", 7) == 7);
  CHECK_NOTHROW(c.finish());
}

TEST_CASE("config rejects unknown keys by name") {
  auto c = KvConfig::parse("[gen]\nn_users = 3\nbogus = 1\n");
  c.get("gen", "n_users", 0);
  try {
    c.finish();
    FAIL("expected ValidationError");
  } catch (const qdrec::ValidationError& e) {
    CHECK(std::string(e.what()).find("gen.bogus") != std::string::npos);
  }
}

TEST_CASE("config parse errors carry the line") {
  try {
    KvConfig::parse("[gen]\nn_users = 3\nno equals here\n");
    FAIL("expected ParseError");
  } catch (const qdrec::ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(KvConfig::parse("[gen\n"), qdrec::ParseError);
  auto c = KvConfig::parse("[a]\nx = abc\n");
  CHECK_THROWS_AS(c.get("a", "x", 1.0), qdrec::ValidationError);
  CHECK_THROWS_AS(KvConfig::load("/nonexistent/qdrec.ini"), qdrec::IoError);
}

TEST_CASE("derived seeds are stable and label-separated") {
  CHECK(qdrec::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(qdrec::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(qdrec::derive_seed(1, "x", 2, 3) == qdrec::derive_seed(1, "x", 2, 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a) {
    seen.insert(qdrec::derive_seed(42, "train_sequence", a, 0));
    seen.insert(qdrec::derive_seed(42, "train_candidates", a, 0));
  }
  CHECK(seen.size() == 100);
}

TEST_CASE("uniform helpers stay in range") {
  qdrec::Rng rng(9);
  std::size_t counts[7] = {};
  for (int i = 0; i < 70000; ++i) {
    double u = qdrec::uniform01(rng);
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    ++counts[qdrec::uniform_index(rng, 7)];
  }
  for (auto n : counts) CHECK(std::abs(static_cast<double>(n) - 10000.0) < 400.0);
}
