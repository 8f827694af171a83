// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Negative samplers. RNS weighs items uniformly, PNS by popularity^alpha and
// HNS takes the top-scored items under the current model. With temporal
// alignment the admissible set is the items online at the interaction time;
// otherwise it is the whole catalog. The positive is never admissible.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qdrec/catalog.hpp"
#include "qdrec/rng.hpp"

namespace qdrec {

class KvConfig;

enum class Strategy { kRns, kPns, kHns };

std::string_view strategy_name(Strategy s);
/// "rns", "pns" or "hns"; throws ValidationError otherwise.
Strategy parse_strategy(std::string_view name);

struct SamplerConfig {
  Strategy strategy = Strategy::kRns;
  double alpha = 1.0;
  bool aligned = true;
  std::size_t c = 20;
  std::uint64_t seed = 42;

  void validate() const;
  /// Reads the [sampler] section.
  static SamplerConfig from_config(const KvConfig& cfg);
};

/// Unnormalized per-item weights: 1 for RNS and HNS, popularity^alpha for
/// PNS. Throws ValidationError for PNS on an all-zero catalog.
std::vector<double> base_probabilities(Strategy strategy, double alpha, const ItemCatalog& catalog);

/// Items eligible as negatives, ascending.
std::vector<ItemId> admissible_set(const ItemCatalog& catalog, const LifecycleIndex& index,
                                   bool aligned, Timestamp t, ItemId positive);

/// Draws `c` distinct items without replacement from `admissible` with
/// probability proportional to `weights` (indexed by item id), one draw at a
/// time. Throws ValidationError, with the counts, when fewer than `c` items
/// carry positive weight.
std::vector<ItemId> weighted_draw(std::span<const ItemId> admissible,
                                  std::span<const double> weights, std::size_t c, Rng& rng);

/// Top-c items by score, ties broken by ascending item id, positive excluded.
/// `scores[i]` belongs to `items[i]`.
std::vector<ItemId> hard_negatives(std::span<const ItemId> items, std::span<const double> scores,
                                   ItemId positive, std::size_t c);

class NegativeSampler {
 public:
  NegativeSampler(const ItemCatalog& catalog, const LifecycleIndex& index, SamplerConfig config);

  const SamplerConfig& config() const { return config_; }
  std::span<const double> weights() const { return weights_; }

  /// Draws for an interaction of `positive` at `t`. For HNS, `score` maps an
  /// item id to the model's retrieval score.
  std::vector<ItemId> draw(Timestamp t, ItemId positive, std::size_t c, Rng& rng,
                           const std::function<double(ItemId)>& score = {}) const;
  std::vector<ItemId> admissible(Timestamp t, ItemId positive) const;

  /// Normalized draw probabilities of the first pick over the admissible set.
  std::vector<std::pair<ItemId, double>> probabilities(Timestamp t, ItemId positive) const;

 private:
  const ItemCatalog& catalog_;
  const LifecycleIndex& index_;
  SamplerConfig config_;
  std::vector<double> weights_;
};

}  // namespace qdrec
