// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qdrec/config.hpp"
#include "qdrec/error.hpp"

namespace qdrec {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kRns: return "rns";
    case Strategy::kPns: return "pns";
    case Strategy::kHns: return "hns";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "rns") return Strategy::kRns;
  if (name == "pns") return Strategy::kPns;
  if (name == "hns") return Strategy::kHns;
  throw ValidationError("unknown sampler strategy '" + std::string(name) + "'");
}

void SamplerConfig::validate() const {
  if (!(alpha >= 0.0)) throw ValidationError("sampler: alpha must be nonnegative");
}

SamplerConfig SamplerConfig::from_config(const KvConfig& c) {
  SamplerConfig s;
  const char* sec = "sampler";
  s.strategy = parse_strategy(c.get(sec, "strategy", std::string(strategy_name(s.strategy))));
  s.alpha = c.get(sec, "alpha", s.alpha);
  s.aligned = c.get(sec, "aligned", s.aligned);
  const auto n = c.get(sec, "c", static_cast<std::int64_t>(s.c));
  if (n < 0) throw ValidationError("sampler: c must be nonnegative");
  s.c = static_cast<std::size_t>(n);
  s.seed = static_cast<std::uint64_t>(c.get(sec, "seed", static_cast<std::int64_t>(s.seed)));
  s.validate();
  return s;
}

std::vector<double> base_probabilities(Strategy strategy, double alpha,
                                       const ItemCatalog& catalog) {
  std::vector<double> w(catalog.size(), 1.0);
  if (strategy != Strategy::kPns) return w;
  if (!(alpha >= 0.0)) throw ValidationError("PNS: alpha must be nonnegative");
  bool any = false;
  for (const auto& rec : catalog.items()) {
    w[rec.item_id] = std::pow(rec.popularity, alpha);
    any = any || rec.popularity > 0.0;
  }
  if (!any) throw ValidationError("PNS: every item has zero popularity");
  return w;
}

std::vector<ItemId> admissible_set(const ItemCatalog& catalog, const LifecycleIndex& index,
                                   bool aligned, Timestamp t, ItemId positive) {
  std::vector<ItemId> out;
  if (aligned) {
    for (ItemId i : index.available_set(t))
      if (i != positive) out.push_back(i);
  } else {
    for (ItemId i = 0; i < catalog.size(); ++i)
      if (i != positive) out.push_back(i);
  }
  return out;
}

std::vector<ItemId> weighted_draw(std::span<const ItemId> admissible,
                                  std::span<const double> weights, std::size_t c, Rng& rng) {
  std::vector<ItemId> pool;
  std::vector<double> w;
  for (ItemId i : admissible) {
    if (i >= weights.size()) throw LookupError("unknown item id " + std::to_string(i));
    if (weights[i] > 0.0) {
      pool.push_back(i);
      w.push_back(weights[i]);
    }
  }
  if (pool.size() < c)
    throw ValidationError("sampler: need " + std::to_string(c) + " negatives but only " +
                          std::to_string(pool.size()) + " admissible items (of " +
                          std::to_string(admissible.size()) + ") carry weight");
  std::vector<ItemId> out;
  out.reserve(c);
  for (std::size_t k = 0; k < c; ++k) {
    double total = 0.0;
    for (double x : w) total += x;
    const double u = uniform01(rng) * total;
    std::size_t pick = w.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    out.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

std::vector<ItemId> hard_negatives(std::span<const ItemId> items, std::span<const double> scores,
                                   ItemId positive, std::size_t c) {
  if (items.size() != scores.size())
    throw ValidationError("hard_negatives: one score per item required");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i] != positive) order.push_back(i);
  if (order.size() < c)
    throw ValidationError("sampler: need " + std::to_string(c) + " hard negatives but only " +
                          std::to_string(order.size()) + " admissible items");
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(c), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return items[a] < items[b];
                    });
  std::vector<ItemId> out;
  for (std::size_t k = 0; k < c; ++k) out.push_back(items[order[k]]);
  return out;
}

NegativeSampler::NegativeSampler(const ItemCatalog& catalog, const LifecycleIndex& index,
                                 SamplerConfig config)
    : catalog_(catalog), index_(index), config_(config) {
  config_.validate();
  weights_ = base_probabilities(config_.strategy, config_.alpha, catalog_);
}

std::vector<ItemId> NegativeSampler::admissible(Timestamp t, ItemId positive) const {
  return admissible_set(catalog_, index_, config_.aligned, t, positive);
}

std::vector<ItemId> NegativeSampler::draw(Timestamp t, ItemId positive, std::size_t c, Rng& rng,
                                          const std::function<double(ItemId)>& score) const {
  const auto items = admissible(t, positive);
  if (items.size() < c)
    throw ValidationError("sampler: need " + std::to_string(c) + " negatives at t=" +
                          std::to_string(t) + " but only " + std::to_string(items.size()) +
                          " admissible items");
  if (config_.strategy == Strategy::kHns) {
    if (!score) throw ValidationError("HNS sampler needs model scores");
    std::vector<double> s(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) s[i] = score(items[i]);
    return hard_negatives(items, s, positive, c);
  }
  return weighted_draw(items, weights_, c, rng);
}

std::vector<std::pair<ItemId, double>> NegativeSampler::probabilities(Timestamp t,
                                                                      ItemId positive) const {
  const auto items = admissible(t, positive);
  double total = 0.0;
  for (ItemId i : items) total += weights_[i];
  std::vector<std::pair<ItemId, double>> out;
  for (ItemId i : items) out.emplace_back(i, total > 0.0 ? weights_[i] / total : 0.0);
  return out;
}

}  // namespace qdrec
