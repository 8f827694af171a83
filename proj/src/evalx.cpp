// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "qdrec/error.hpp"
#include "qdrec/rng.hpp"
#include "qdrec/scoring.hpp"
#include "text_util.hpp"

namespace qdrec {

std::vector<UserSplit> leave_one_out(const Corpus& corpus) {
  std::vector<UserSplit> out(corpus.users.size());
  for (std::size_t u = 0; u < corpus.users.size(); ++u) {
    const auto& xs = corpus.users[u];
    auto& s = out[u];
    if (xs.size() < 3) {
      s.train = xs;
      continue;
    }
    s.train.assign(xs.begin(), xs.end() - 2);
    s.valid = xs[xs.size() - 2];
    s.test = xs.back();
  }
  return out;
}

std::vector<EvalCase> eval_cases(std::span<const UserSplit> splits, EvalSplit which) {
  std::vector<EvalCase> out;
  for (std::size_t u = 0; u < splits.size(); ++u) {
    const auto& s = splits[u];
    const auto& target = which == EvalSplit::kValid ? s.valid : s.test;
    if (!target) continue;
    EvalCase c;
    c.user = static_cast<std::uint32_t>(u);
    c.history = s.train;
    if (which == EvalSplit::kTest) c.history.push_back(*s.valid);
    c.target = *target;
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

std::size_t position_in(std::span<const ItemId> ranked, ItemId relevant, std::size_t k) {
  if (k < 1) throw ValidationError("cutoff k must be at least 1");
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i] == relevant) return i + 1;
  return 0;
}

}  // namespace

int hr_at_k(std::span<const ItemId> ranked, ItemId relevant, std::size_t k) {
  const auto r = position_in(ranked, relevant, k);
  return r != 0 && r <= k ? 1 : 0;
}

double ndcg_at_k(std::span<const ItemId> ranked, ItemId relevant, std::size_t k) {
  const auto r = position_in(ranked, relevant, k);
  if (r == 0 || r > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(r) + 1.0);
}

std::vector<ItemId> rank_items(std::span<const ItemId> items, std::span<const double> scores) {
  if (items.size() != scores.size()) throw ValidationError("rank_items: one score per item required");
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return items[a] < items[b];
  });
  std::vector<ItemId> out;
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

std::size_t rank_of(std::span<const ItemId> items, std::span<const double> scores,
                    std::size_t positive) {
  if (items.size() != scores.size() || positive >= items.size())
    throw ValidationError("rank_of: bad arguments");
  const double s = scores[positive];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i == positive) continue;
    if (scores[i] > s || (scores[i] == s && items[i] < items[positive])) ++rank;
  }
  return rank;
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

struct CaseResult {
  bool skipped = false;
  std::size_t rank = 0;
  double loss = 0.0;
  std::size_t candidates = 0;
};

CaseResult score_case(const CaseScorer& scorer, const EvalCase& c,
                      const std::vector<ItemId>& items, std::size_t positive) {
  const auto scores = scorer(c, items);
  if (scores.size() != items.size())
    throw ValidationError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(items.size()) + " candidates");
  CaseResult r;
  r.rank = rank_of(items, scores, positive);
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double se = 0.0;
  for (double s : scores) se += std::exp(s - mx);
  r.loss = mx + std::log(se) - scores[positive];
  r.candidates = items.size();
  return r;
}

MetricTable reduce(const std::vector<CaseResult>& results) {
  MetricTable m;
  double cand = 0.0;
  for (const auto& r : results) {
    if (r.skipped) {
      ++m.skipped;
      continue;
    }
    ++m.cases;
    m.loss += r.loss;
    cand += static_cast<double>(r.candidates);
    const auto rk = static_cast<double>(r.rank);
    if (r.rank <= 1) m.hr1 += 1.0;
    if (r.rank <= 5) {
      m.hr5 += 1.0;
      m.ndcg5 += 1.0 / std::log2(rk + 1.0);
    }
    if (r.rank <= 10) {
      m.hr10 += 1.0;
      m.ndcg10 += 1.0 / std::log2(rk + 1.0);
    }
  }
  if (m.cases) {
    const double n = static_cast<double>(m.cases);
    m.loss /= n;
    m.hr1 /= n;
    m.hr5 /= n;
    m.hr10 /= n;
    m.ndcg5 /= n;
    m.ndcg10 /= n;
    m.mean_candidates = cand / n;
  }
  return m;
}

}  // namespace

MetricTable evaluate_sampled(const CaseScorer& scorer, std::span<const EvalCase> cases,
                             const Corpus& corpus, std::size_t n_negatives, std::uint64_t seed,
                             std::size_t workers) {
  std::vector<CaseResult> results(cases.size());
  parallel_for(cases.size(), workers, [&](std::size_t i) {
    const auto& c = cases[i];
    std::unordered_set<ItemId> seen;
    if (c.user < corpus.users.size())
      for (const auto& a : corpus.users[c.user]) seen.insert(a.item_id);
    seen.insert(c.target.item_id);
    std::vector<ItemId> pool;
    for (ItemId it = 0; it < corpus.catalog.size(); ++it)
      if (!seen.count(it)) pool.push_back(it);
    if (pool.empty()) {
      results[i].skipped = true;
      return;
    }
    Rng rng = make_rng(seed, "eval_negatives", c.user, c.target.group_id);
    const std::size_t k = std::min(n_negatives, pool.size());
    for (std::size_t j = 0; j < k; ++j) {
      const auto pick = j + uniform_index(rng, pool.size() - j);
      std::swap(pool[j], pool[pick]);
    }
    std::vector<ItemId> items(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    const std::size_t positive = uniform_index(rng, k + 1);
    items.insert(items.begin() + static_cast<std::ptrdiff_t>(positive), c.target.item_id);
    results[i] = score_case(scorer, c, items, positive);
  });
  MetricTable m = reduce(results);
  return m;
}

MetricTable evaluate_aligned(const CaseScorer& scorer, std::span<const EvalCase> cases,
                             const LifecycleIndex& index, std::size_t workers) {
  std::vector<CaseResult> results(cases.size());
  parallel_for(cases.size(), workers, [&](std::size_t i) {
    const auto& c = cases[i];
    const auto avail = index.available_set(c.target.timestamp);
    std::vector<ItemId> items(avail.begin(), avail.end());
    const auto it = std::lower_bound(items.begin(), items.end(), c.target.item_id);
    if (it == items.end() || *it != c.target.item_id)
      throw ValidationError("data inconsistency: item " + std::to_string(c.target.item_id) +
                            " is offline at t=" + std::to_string(c.target.timestamp) +
                            " for user " + std::to_string(c.user));
    results[i] = score_case(scorer, c, items, static_cast<std::size_t>(it - items.begin()));
  });
  return reduce(results);
}

CaseScorer model_scorer(const ModelParams& params, const ModelConfig& cfg,
                        const SequenceOptions& opts, const QueryPool& pool, std::uint64_t seed) {
  return [&params, cfg, opts, &pool, seed](const EvalCase& c, std::span<const ItemId> items) {
    Rng rng = make_rng(seed, "eval_sequence", c.user, c.target.group_id);
    const EventSequence seq = assemble_for_prediction(c.history, c.target, opts, pool, rng);
    const Matrix o = encode_placeholders(seq, params, cfg);
    return retrieval_scores(o.row(o.rows() - 1), params.item_emb, items);
  };
}

std::vector<double> train_popularity(std::span<const UserSplit> splits, std::size_t n_items) {
  std::vector<double> counts(n_items, 0.0);
  for (const auto& s : splits)
    for (const auto& a : s.train)
      if (a.item_id < n_items) counts[a.item_id] += 1.0;
  return counts;
}

CaseScorer popularity_scorer(std::vector<double> counts) {
  return [counts = std::move(counts)](const EvalCase&, std::span<const ItemId> items) {
    std::vector<double> s;
    for (ItemId i : items) s.push_back(i < counts.size() ? counts[i] : 0.0);
    return s;
  };
}

std::string format_metric_row(std::size_t epoch, std::string_view split, const MetricTable& m) {
  using text::format_double;
  return std::to_string(epoch) + "," + std::string(split) + "," + format_double(m.loss) + "," +
         format_double(m.hr1) + "," + format_double(m.hr5) + "," + format_double(m.hr10) + "," +
         format_double(m.ndcg5) + "," + format_double(m.ndcg10);
}

}  // namespace qdrec
