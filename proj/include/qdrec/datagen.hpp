// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic search-and-recommendation corpus with item lifecycle churn.
//
// Users and items get latent factor vectors; at each action group the user
// picks among the items online at that timestamp with probability
// proportional to exp(scale * (u . v + scenario term) + w * log popularity).
// A session is a run of consecutive timestamps made of journeys: browse an
// item, possibly click it, possibly purchase it. A journey may be started by
// a search whose text comes from the item's query-pool entries.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qdrec/catalog.hpp"
#include "qdrec/matrix.hpp"

namespace qdrec {

class KvConfig;

struct GenConfig {
  int n_users = 200;
  int n_items = 100;
  Timestamp horizon = 1000;
  double churn_rate = 0.3;
  int session_len_min = 1;
  int session_len_max = 6;
  int sessions_min = 6;
  int sessions_max = 12;
  double search_prob = 0.2;
  int feedback_types = 3;
  int preference_dim = 8;
  std::uint64_t seed = 42;

  double delta_tail_fraction = 0.2;
  double lifecycle_min_fraction = 0.1;
  double lifecycle_max_fraction = 0.4;
  double second_interval_prob = 0.2;
  double preference_scale = 3.0;
  double popularity_weight = 1.0;
  double popularity_sigma = 1.0;
  double escalate_prob = 0.5;
  int n_scenarios = 4;
  Timestamp scenario_period = 25;
  double scenario_effect = 0.5;
  int attribute_vocab = 40;

  /// Throws ValidationError naming the first bad field.
  void validate() const;
  /// Reads the [gen] section; unknown keys are left for KvConfig::finish().
  static GenConfig from_config(const KvConfig& cfg);
};

struct Interaction {
  std::uint32_t user_id = 0;
  ItemId item_id = 0;
  int feedback = 0;
  Timestamp timestamp = 0;
  std::uint32_t session_id = 0;
  std::uint32_t group_id = 0;
  bool delta = false;
  std::optional<std::string> triggering_query;
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct Corpus {
  ItemCatalog catalog;
  /// Indexed by user id; each list is chronological.
  std::vector<std::vector<Interaction>> users;
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// The corpus plus the hidden generative state, for oracle scoring in tests.
struct GeneratedWorld {
  Corpus corpus;
  GenConfig config;
  Matrix user_factors;      // n_users x preference_dim
  Matrix item_factors;      // n_items x preference_dim
  Matrix scenario_factors;  // n_scenarios x preference_dim

  /// The generator's own choice logit for (user, item, t).
  double preference_logit(std::uint32_t user, ItemId item, Timestamp t) const;
};

GeneratedWorld generate_world(const GenConfig& config);
Corpus generate_corpus(const GenConfig& config);

/// Scenario token for a timestamp: discretized time of day.
inline int scenario_of(Timestamp t, Timestamp period, int n_scenarios) {
  return static_cast<int>((t / period) % n_scenarios);
}

// Interaction file: two comment lines (user count, column names), then
// `user<TAB>item<TAB>feedback<TAB>t<TAB>session<TAB>group<TAB>delta<TAB>query`.
std::string format_interactions(const Corpus& corpus);
std::vector<std::vector<Interaction>> parse_interactions(std::string_view text);

/// Writes catalog.tsv and interactions.tsv under `dir`.
void serialize_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus parse_corpus(const std::filesystem::path& dir);

/// Distinct triggering-query texts in first-seen order.
std::vector<std::string> collect_user_queries(const Corpus& corpus);

}  // namespace qdrec
