// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Item corpus with online/offline lifecycles, the per-timestamp availability
// index, and the search-query pool.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qdrec {

using ItemId = std::uint32_t;
using Timestamp = std::int64_t;

/// Half-open online interval [on, off).
struct Interval {
  Timestamp on = 0;
  Timestamp off = 0;
  bool contains(Timestamp t) const { return on <= t && t < off; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct ItemRecord {
  ItemId item_id = 0;
  std::vector<Interval> lifecycle;  // sorted, disjoint, on < off
  double popularity = 0.0;
  // Surrogates for name, category and IP, in that order.
  std::vector<int> attribute_tokens;
  friend bool operator==(const ItemRecord&, const ItemRecord&) = default;
};

class ItemCatalog {
 public:
  ItemCatalog() = default;
  /// Items must carry ids 0..n-1 in order; lifecycles are validated.
  explicit ItemCatalog(std::vector<ItemRecord> items);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const ItemRecord& item(ItemId id) const;
  std::span<const ItemRecord> items() const { return items_; }

  /// True iff some lifecycle interval of `id` contains t. Throws LookupError
  /// for unknown ids.
  bool availability(ItemId id, Timestamp t) const;

  /// One past the latest t_off over all items.
  Timestamp horizon() const { return horizon_; }

  friend bool operator==(const ItemCatalog& a, const ItemCatalog& b) {
    return a.items_ == b.items_;
  }

 private:
  std::vector<ItemRecord> items_;
  Timestamp horizon_ = 0;
};

/// Bucket-per-timestamp map to the ascending set of online items.
class LifecycleIndex {
 public:
  LifecycleIndex() = default;
  explicit LifecycleIndex(const ItemCatalog& catalog);

  /// Items online at t, ascending. Empty outside [0, horizon).
  std::span<const ItemId> available_set(Timestamp t) const;
  Timestamp horizon() const { return static_cast<Timestamp>(buckets_.size()); }

 private:
  std::vector<std::vector<ItemId>> buckets_;
};

enum class QueryKind { kUserQuery, kItemInfo, kDescription, kKeyword, kMimicExpression };

std::string_view query_kind_name(QueryKind kind);

struct QueryPoolEntry {
  std::uint32_t entry_id = 0;
  QueryKind kind = QueryKind::kUserQuery;
  std::optional<ItemId> source_item;
  std::string text;
  std::vector<double> embedding;  // unit L2 norm
};

/// Deterministic stand-in for a text encoder: each whitespace-separated word
/// seeds (via FNV-1a) a standard-normal d-vector; the word vectors are summed
/// and the result L2-normalized, so texts sharing words embed nearby.
/// Throws ValidationError for text without words or d == 0.
std::vector<double> embed_query(std::string_view text, std::size_t d);

/// Builds the pool: per item one item-info entry, one description, one
/// keyword per attribute token and one or more mimic expressions, followed by
/// the supplied user queries. Pure function of its arguments.
std::vector<QueryPoolEntry> build_query_pool(const ItemCatalog& catalog,
                                             std::span<const std::string> user_queries,
                                             std::uint64_t seed, std::size_t d);

/// `item_id<TAB>popularity<TAB>on-off,on-off<TAB>tok tok ...`, one per line.
void write_catalog(const ItemCatalog& catalog, const std::filesystem::path& path);
ItemCatalog read_catalog(const std::filesystem::path& path);
std::string format_catalog(const ItemCatalog& catalog);
ItemCatalog parse_catalog(std::string_view text);

}  // namespace qdrec
