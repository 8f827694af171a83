// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/catalog.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "qdrec/error.hpp"
#include "qdrec/rng.hpp"
#include "text_util.hpp"

namespace qdrec {

ItemCatalog::ItemCatalog(std::vector<ItemRecord> items) : items_(std::move(items)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& rec = items_[i];
    if (rec.item_id != i)
      throw ValidationError("catalog: item ids must be dense and ordered; got " +
                            std::to_string(rec.item_id) + " at index " + std::to_string(i));
    if (!(rec.popularity >= 0.0))
      throw ValidationError("catalog: negative popularity for item " + std::to_string(i));
    for (std::size_t k = 0; k < rec.lifecycle.size(); ++k) {
      const auto& iv = rec.lifecycle[k];
      if (iv.on < 0 || iv.on >= iv.off)
        throw ValidationError("catalog: empty or negative interval for item " + std::to_string(i));
      if (k > 0 && rec.lifecycle[k - 1].off > iv.on)
        throw ValidationError("catalog: overlapping or unsorted intervals for item " +
                              std::to_string(i));
      horizon_ = std::max(horizon_, iv.off);
    }
  }
}

const ItemRecord& ItemCatalog::item(ItemId id) const {
  if (id >= items_.size()) throw LookupError("unknown item id " + std::to_string(id));
  return items_[id];
}

bool ItemCatalog::availability(ItemId id, Timestamp t) const {
  const auto& lc = item(id).lifecycle;
  // First interval with off > t; available iff it also starts at or before t.
  auto it = std::upper_bound(lc.begin(), lc.end(), t,
                             [](Timestamp v, const Interval& iv) { return v < iv.off; });
  return it != lc.end() && it->contains(t);
}

LifecycleIndex::LifecycleIndex(const ItemCatalog& catalog)
    : buckets_(static_cast<std::size_t>(catalog.horizon())) {
  for (const auto& rec : catalog.items())
    for (const auto& iv : rec.lifecycle)
      for (Timestamp t = iv.on; t < iv.off; ++t)
        buckets_[static_cast<std::size_t>(t)].push_back(rec.item_id);
  // Items are visited in ascending id order, so each bucket is already sorted.
}

std::span<const ItemId> LifecycleIndex::available_set(Timestamp t) const {
  if (t < 0 || t >= horizon()) return {};
  return buckets_[static_cast<std::size_t>(t)];
}

std::string_view query_kind_name(QueryKind kind) {
  switch (kind) {
    case QueryKind::kUserQuery: return "user_query";
    case QueryKind::kItemInfo: return "item_info";
    case QueryKind::kDescription: return "description";
    case QueryKind::kKeyword: return "keyword";
    case QueryKind::kMimicExpression: return "mimic_expression";
  }
  return "unknown";
}

std::vector<double> embed_query(std::string_view text, std::size_t d) {
  if (d == 0) throw ValidationError("embed_query: dimension must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d, 0.0);
  bool any = false;
  for (auto w : text::split(text, ' ')) {
    if (w.empty()) continue;
    any = true;
    Rng rng(fnv1a64(w));
    normal.reset();
    for (double& x : v) x += normal(rng);
  }
  if (!any) throw ValidationError("embed_query: empty text");
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

namespace {

std::string word(int token) { return "w" + std::to_string(token); }

constexpr std::array<std::string_view, 4> kMimicTemplates = {
    "recommend some {} items for me",
    "any recommendations for {}",
    "show me {} nearby",
    "looking for {} today",
};

std::string fill_template(std::string_view tmpl, std::string_view kw) {
  std::string out(tmpl);
  out.replace(out.find("{}"), 2, kw);
  return out;
}

}  // namespace

std::vector<QueryPoolEntry> build_query_pool(const ItemCatalog& catalog,
                                             std::span<const std::string> user_queries,
                                             std::uint64_t seed, std::size_t d) {
  std::vector<QueryPoolEntry> pool;
  auto push = [&](QueryKind kind, std::optional<ItemId> src, std::string text) {
    QueryPoolEntry e;
    e.entry_id = static_cast<std::uint32_t>(pool.size());
    e.kind = kind;
    e.source_item = src;
    e.embedding = embed_query(text, d);
    e.text = std::move(text);
    pool.push_back(std::move(e));
  };

  for (const auto& rec : catalog.items()) {
    Rng rng = make_rng(seed, "query_pool", rec.item_id);
    std::vector<std::string> keywords;
    for (int tok : rec.attribute_tokens) keywords.push_back(word(tok));
    if (keywords.empty()) keywords.push_back("item" + std::to_string(rec.item_id));

    const auto& at = rec.attribute_tokens;
    std::string info = "name " + keywords[0];
    if (at.size() > 1) info += " category " + word(at[1]);
    if (at.size() > 2) info += " ip " + word(at[2]);
    push(QueryKind::kItemInfo, rec.item_id, info);

    std::string desc = "a " + (at.size() > 1 ? word(at[1]) + " " : std::string()) +
                       "item called " + keywords[0];
    if (at.size() > 2) desc += " from " + word(at[2]);
    push(QueryKind::kDescription, rec.item_id, desc);

    for (const auto& kw : keywords) push(QueryKind::kKeyword, rec.item_id, kw);
    for (const auto& kw : keywords) {
      const auto t = uniform_index(rng, kMimicTemplates.size());
      push(QueryKind::kMimicExpression, rec.item_id, fill_template(kMimicTemplates[t], kw));
    }
  }
  for (const auto& q : user_queries) push(QueryKind::kUserQuery, std::nullopt, q);
  return pool;
}

std::string format_catalog(const ItemCatalog& catalog) {
  std::string out = "# item_id\tpopularity\tintervals\tattribute_tokens\n";
  for (const auto& rec : catalog.items()) {
    out += std::to_string(rec.item_id);
    out += '\t';
    out += text::format_double(rec.popularity);
    out += '\t';
    for (std::size_t k = 0; k < rec.lifecycle.size(); ++k) {
      if (k) out += ',';
      out += std::to_string(rec.lifecycle[k].on) + "-" + std::to_string(rec.lifecycle[k].off);
    }
    out += '\t';
    for (std::size_t k = 0; k < rec.attribute_tokens.size(); ++k) {
      if (k) out += ' ';
      out += std::to_string(rec.attribute_tokens[k]);
    }
    out += '\n';
  }
  return out;
}

ItemCatalog parse_catalog(std::string_view content) {
  std::vector<ItemRecord> items;
  bool complete = true;
  const auto all = text::lines(content, &complete);
  std::size_t last_valid = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto line = all[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') {
      last_valid = line_no;
      continue;
    }
    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError("catalog line " + std::to_string(line_no) + ": " + why +
                            " (last valid line " + std::to_string(last_valid) + ")",
                        line_no);
    };
    if (i + 1 == all.size() && !complete) throw fail("truncated record");
    const auto fields = text::split(line, '\t');
    if (fields.size() != 4) throw fail("expected 4 tab-separated fields");
    ItemRecord rec;
    if (!text::parse_number(fields[0], rec.item_id)) throw fail("bad item_id");
    if (!text::parse_number(fields[1], rec.popularity)) throw fail("bad popularity");
    if (!fields[2].empty()) {
      for (auto part : text::split(fields[2], ',')) {
        const auto dash = part.find('-');
        Interval iv;
        if (dash == std::string_view::npos || !text::parse_number(part.substr(0, dash), iv.on) ||
            !text::parse_number(part.substr(dash + 1), iv.off))
          throw fail("bad interval '" + std::string(part) + "'");
        rec.lifecycle.push_back(iv);
      }
    }
    if (!fields[3].empty()) {
      for (auto tok : text::split(fields[3], ' ')) {
        int v = 0;
        if (!text::parse_number(tok, v)) throw fail("bad attribute token");
        rec.attribute_tokens.push_back(v);
      }
    }
    items.push_back(std::move(rec));
    last_valid = line_no;
  }
  return ItemCatalog(std::move(items));
}

void write_catalog(const ItemCatalog& catalog, const std::filesystem::path& path) {
  text::write_file(path, format_catalog(catalog));
}

ItemCatalog read_catalog(const std::filesystem::path& path) {
  return parse_catalog(text::read_file(path));
}

}  // namespace qdrec
