// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Leave-one-out evaluation. Each user's last interaction is the test target
// and the one before it the validation target. A case is ranked either among
// sampled negatives the user never interacted with, or among every item
// online at the target's timestamp. Ranks break ties by ascending item id.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdrec/catalog.hpp"
#include "qdrec/datagen.hpp"
#include "qdrec/model.hpp"
#include "qdrec/sequence.hpp"

namespace qdrec {

struct UserSplit {
  std::vector<Interaction> train;
  std::optional<Interaction> valid;
  std::optional<Interaction> test;
};

/// Users with fewer than three interactions keep everything in train.
std::vector<UserSplit> leave_one_out(const Corpus& corpus);

enum class EvalSplit { kValid, kTest };

struct EvalCase {
  std::uint32_t user = 0;
  std::vector<Interaction> history;
  Interaction target;
};

std::vector<EvalCase> eval_cases(std::span<const UserSplit> splits, EvalSplit which);

/// 1 iff `relevant` is among the first k of `ranked`. Throws for k < 1.
int hr_at_k(std::span<const ItemId> ranked, ItemId relevant, std::size_t k);
/// 1 / log2(rank + 1) when the 1-based rank is at most k, else 0.
double ndcg_at_k(std::span<const ItemId> ranked, ItemId relevant, std::size_t k);

/// Items by descending score, ties by ascending id.
std::vector<ItemId> rank_items(std::span<const ItemId> items, std::span<const double> scores);
/// 1-based rank of items[positive]: 1 + #higher + #equal with a smaller id.
std::size_t rank_of(std::span<const ItemId> items, std::span<const double> scores,
                    std::size_t positive);

struct MetricTable {
  double loss = 0.0;  // mean -log softmax of the positive over its candidates
  double hr1 = 0.0, hr5 = 0.0, hr10 = 0.0, ndcg5 = 0.0, ndcg10 = 0.0;
  std::size_t cases = 0;
  std::size_t skipped = 0;
  double mean_candidates = 0.0;
};

/// Scores `candidates` for one case.
using CaseScorer =
    std::function<std::vector<double>(const EvalCase& c, std::span<const ItemId> candidates)>;

/// Positive plus up to `n_negatives` items drawn uniformly from those the user
/// never interacted with (fewer when the catalog has fewer). Users without any
/// such item are skipped.
MetricTable evaluate_sampled(const CaseScorer& scorer, std::span<const EvalCase> cases,
                             const Corpus& corpus, std::size_t n_negatives, std::uint64_t seed,
                             std::size_t workers = 1);

/// Candidates are every item online at the target's timestamp. Throws
/// ValidationError when the positive itself is offline.
MetricTable evaluate_aligned(const CaseScorer& scorer, std::span<const EvalCase> cases,
                             const LifecycleIndex& index, std::size_t workers = 1);

/// Scores with the model's retrieval logits at a final placeholder appended
/// to the case history.
CaseScorer model_scorer(const ModelParams& params, const ModelConfig& cfg,
                        const SequenceOptions& opts, const QueryPool& pool, std::uint64_t seed);

/// Interaction counts per item over the train split.
std::vector<double> train_popularity(std::span<const UserSplit> splits, std::size_t n_items);
CaseScorer popularity_scorer(std::vector<double> counts);

/// `epoch,split,loss,hr1,hr5,hr10,ndcg5,ndcg10`
inline constexpr const char* kMetricHeader = "epoch,split,loss,hr1,hr5,hr10,ndcg5,ndcg10";
std::string format_metric_row(std::size_t epoch, std::string_view split, const MetricTable& m);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace qdrec
