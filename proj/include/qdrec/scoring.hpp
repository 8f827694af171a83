// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Candidate logits for ranking-mode sequences, computed three ways:
//
//   naive  every candidate replaces its placeholder and the whole stack runs
//          again (c' forwards per group);
//   kv     one pass over the sequence caches each layer's K and V, then only
//          the C appended candidate rows are computed against the expanded
//          mask;
//   diag   as kv, but the candidate-candidate block is reduced to its
//          diagonal, one dot product per candidate.
//
// Candidate rows reuse their placeholder's position and timestamp for the
// relative bias. Every path reports its multiply-accumulate counts.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qdrec/matrix.hpp"
#include "qdrec/model.hpp"
#include "qdrec/qdb.hpp"
#include "qdrec/rng.hpp"
#include "qdrec/sequence.hpp"

namespace qdrec {

struct FlopReport {
  std::size_t n = 0, j = 0, cprime = 0, d = 0, h = 0;
  /// Shared pass over the original sequence (zero for naive).
  std::uint64_t stage1 = 0;
  /// Candidate-specific work, including DSFNet and the ranking head.
  std::uint64_t stage2 = 0;
  /// Candidate-specific MACs of each QDB layer.
  std::vector<std::uint64_t> layer;
  std::uint64_t total() const { return stage1 + stage2; }
};

struct CandidateScores {
  /// logits[g][i] for candidate i of group g.
  std::vector<std::vector<double>> logits;
  FlopReport flops;
};

CandidateScores score_candidates_naive(const EventSequence& seq,
                                       std::span<const CandidateGroup> groups,
                                       const ModelParams& p, const ModelConfig& cfg);
CandidateScores score_candidates_kv(const EventSequence& seq,
                                    std::span<const CandidateGroup> groups,
                                    const ModelParams& p, const ModelConfig& cfg);
CandidateScores score_candidates_diag(const EventSequence& seq,
                                      std::span<const CandidateGroup> groups,
                                      const ModelParams& p, const ModelConfig& cfg);

/// Stage 1 of the kv and diag paths: per-layer K and V of the sequence.
KVCache build_kv_cache(const EventSequence& seq, const ModelParams& p, const ModelConfig& cfg);

/// Sequence length above which the expanded-mask path beats replication:
/// J (1 + sqrt(1 + 4 c')) / 2.
double complexity_threshold_value(std::size_t j, std::size_t cprime);
bool complexity_threshold(std::size_t n, std::size_t j, std::size_t cprime);

/// Combined mask of a sequence under the model's masking switches.
Matrix sequence_mask(const EventSequence& seq, const ModelConfig& cfg);

/// DSFNet outputs o at every placeholder (J x d).
Matrix encode_placeholders(const EventSequence& seq, const ModelParams& p,
                           const ModelConfig& cfg);

/// o . emb_i for each listed item. Throws ValidationError on an empty list.
std::vector<double> retrieval_scores(std::span<const double> o, const Matrix& item_emb,
                                     std::span<const ItemId> items);

/// A sequence with its candidate groups.
struct ScoringCase {
  EventSequence seq;
  std::vector<CandidateGroup> groups;
};

/// Random sequence of exactly n tokens (S, then Q I F groups split into
/// sessions) with j invalid-key placeholders, each carrying `cprime` distinct
/// candidates that include its target. Other Q tokens are valid search keys
/// with probability 0.3. Needs n >= 3j + 1 and cfg.n_items >= cprime.
ScoringCase random_scoring_case(std::size_t n, std::size_t j, std::size_t cprime,
                                const ModelConfig& cfg, Rng& rng);

}  // namespace qdrec
