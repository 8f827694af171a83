// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "qdrec/config.hpp"
#include "qdrec/error.hpp"
#include "qdrec/rng.hpp"
#include "text_util.hpp"

namespace qdrec {

void GenConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("gen config: " + what); };
  if (n_users <= 0) fail("n_users must be positive");
  if (n_items <= 0) fail("n_items must be positive");
  if (horizon <= 1) fail("horizon must exceed 1");
  if (!(churn_rate >= 0 && churn_rate <= 1)) fail("churn_rate must be in [0,1]");
  if (!(search_prob >= 0 && search_prob <= 1)) fail("search_prob must be in [0,1]");
  if (!(escalate_prob >= 0 && escalate_prob <= 1)) fail("escalate_prob must be in [0,1]");
  if (!(second_interval_prob >= 0 && second_interval_prob <= 1))
    fail("second_interval_prob must be in [0,1]");
  if (!(delta_tail_fraction >= 0 && delta_tail_fraction <= 1))
    fail("delta_tail_fraction must be in [0,1]");
  if (session_len_min <= 0 || session_len_max < session_len_min)
    fail("session_len range invalid");
  if (sessions_min <= 0 || sessions_max < sessions_min) fail("sessions range invalid");
  if (feedback_types <= 0) fail("feedback_types must be positive");
  if (preference_dim <= 0) fail("preference_dim must be positive");
  if (n_scenarios <= 0) fail("n_scenarios must be positive");
  if (scenario_period <= 0) fail("scenario_period must be positive");
  if (attribute_vocab <= 0) fail("attribute_vocab must be positive");
  if (!(lifecycle_min_fraction > 0 && lifecycle_min_fraction <= lifecycle_max_fraction &&
        lifecycle_max_fraction < 1))
    fail("lifecycle fractions must satisfy 0 < min <= max < 1");
}

GenConfig GenConfig::from_config(const KvConfig& c) {
  GenConfig g;
  const char* s = "gen";
  g.n_users = c.get(s, "n_users", g.n_users);
  g.n_items = c.get(s, "n_items", g.n_items);
  g.horizon = c.get(s, "horizon", g.horizon);
  g.churn_rate = c.get(s, "churn_rate", g.churn_rate);
  g.session_len_min = c.get(s, "session_len_min", g.session_len_min);
  g.session_len_max = c.get(s, "session_len_max", g.session_len_max);
  g.sessions_min = c.get(s, "sessions_min", g.sessions_min);
  g.sessions_max = c.get(s, "sessions_max", g.sessions_max);
  g.search_prob = c.get(s, "search_prob", g.search_prob);
  g.feedback_types = c.get(s, "feedback_types", g.feedback_types);
  g.preference_dim = c.get(s, "preference_dim", g.preference_dim);
  g.seed = static_cast<std::uint64_t>(c.get(s, "seed", static_cast<std::int64_t>(g.seed)));
  g.delta_tail_fraction = c.get(s, "delta_tail_fraction", g.delta_tail_fraction);
  g.lifecycle_min_fraction = c.get(s, "lifecycle_min_fraction", g.lifecycle_min_fraction);
  g.lifecycle_max_fraction = c.get(s, "lifecycle_max_fraction", g.lifecycle_max_fraction);
  g.second_interval_prob = c.get(s, "second_interval_prob", g.second_interval_prob);
  g.preference_scale = c.get(s, "preference_scale", g.preference_scale);
  g.popularity_weight = c.get(s, "popularity_weight", g.popularity_weight);
  g.popularity_sigma = c.get(s, "popularity_sigma", g.popularity_sigma);
  g.escalate_prob = c.get(s, "escalate_prob", g.escalate_prob);
  g.n_scenarios = c.get(s, "n_scenarios", g.n_scenarios);
  g.scenario_period = c.get(s, "scenario_period", g.scenario_period);
  g.scenario_effect = c.get(s, "scenario_effect", g.scenario_effect);
  g.attribute_vocab = c.get(s, "attribute_vocab", g.attribute_vocab);
  return g;
}

double GeneratedWorld::preference_logit(std::uint32_t user, ItemId item, Timestamp t) const {
  const int s = scenario_of(t, config.scenario_period, config.n_scenarios);
  double affinity = 0.0;
  for (int k = 0; k < config.preference_dim; ++k)
    affinity += (user_factors(user, k) + config.scenario_effect * scenario_factors(s, k)) *
                item_factors(item, k);
  const double pop = corpus.catalog.item(item).popularity;
  return config.preference_scale * affinity + config.popularity_weight * std::log(pop);
}

namespace {

Matrix random_factors(Rng& rng, int rows, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::pow(static_cast<double>(dim), 0.25));
  Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(dim));
  for (double& v : m.flat()) v = normal(rng);
  return m;
}

std::vector<Interval> churned_lifecycle(const GenConfig& cfg, Rng& rng) {
  const auto h = cfg.horizon;
  auto span_len = [&] {
    const double frac = cfg.lifecycle_min_fraction +
                        uniform01(rng) * (cfg.lifecycle_max_fraction - cfg.lifecycle_min_fraction);
    return std::clamp<Timestamp>(static_cast<Timestamp>(frac * static_cast<double>(h)), 1, h - 1);
  };
  const Timestamp len = span_len();
  const Timestamp on = static_cast<Timestamp>(uniform_index(rng, static_cast<std::uint64_t>(h - len + 1)));
  std::vector<Interval> lc{{on, on + len}};
  if (uniform01(rng) < cfg.second_interval_prob) {
    // Re-launch after a gap, if the remaining horizon has room.
    const Timestamp gap_start = on + len + 1;
    if (gap_start < h) {
      const Timestamp len2 = std::min(span_len(), h - gap_start);
      const Timestamp on2 =
          gap_start + static_cast<Timestamp>(uniform_index(rng, static_cast<std::uint64_t>(h - gap_start - len2 + 1)));
      lc.push_back({on2, on2 + len2});
    }
  }
  return lc;
}

std::size_t draw_softmax(Rng& rng, const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) total += (w[i] = std::exp(logits[i] - mx));
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  return w.size() - 1;
}

}  // namespace

GeneratedWorld generate_world(const GenConfig& cfg) {
  cfg.validate();
  if (static_cast<Timestamp>(cfg.sessions_max) * cfg.session_len_max > cfg.horizon)
    throw ValidationError("gen config: horizon " + std::to_string(cfg.horizon) +
                          " too short for " + std::to_string(cfg.sessions_max) + " sessions of up to " +
                          std::to_string(cfg.session_len_max) + " steps");

  GeneratedWorld world;
  world.config = cfg;

  Rng crng = make_rng(cfg.seed, "catalog");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ItemRecord> items(static_cast<std::size_t>(cfg.n_items));
  for (int i = 0; i < cfg.n_items; ++i) {
    auto& rec = items[static_cast<std::size_t>(i)];
    rec.item_id = static_cast<ItemId>(i);
    rec.popularity = std::exp(cfg.popularity_sigma * normal(crng));
    for (int k = 0; k < 3; ++k)
      rec.attribute_tokens.push_back(static_cast<int>(uniform_index(crng, static_cast<std::uint64_t>(cfg.attribute_vocab))));
    if (uniform01(crng) < cfg.churn_rate)
      rec.lifecycle = churned_lifecycle(cfg, crng);
    else
      rec.lifecycle = {{0, cfg.horizon}};
  }
  world.corpus.catalog = ItemCatalog(std::move(items));
  const auto& catalog = world.corpus.catalog;
  const LifecycleIndex index(catalog);

  Rng frng = make_rng(cfg.seed, "factors");
  world.user_factors = random_factors(frng, cfg.n_users, cfg.preference_dim);
  world.item_factors = random_factors(frng, cfg.n_items, cfg.preference_dim);
  world.scenario_factors = random_factors(frng, cfg.n_scenarios, cfg.preference_dim);

  // Query texts per item for search-triggered journeys.
  const auto pool = build_query_pool(catalog, {}, derive_seed(cfg.seed, "gen_pool"), 1);
  std::vector<std::vector<const std::string*>> item_queries(catalog.size());
  for (const auto& e : pool)
    if (e.source_item) item_queries[*e.source_item].push_back(&e.text);

  const Timestamp delta_from = static_cast<Timestamp>(
      std::ceil((1.0 - cfg.delta_tail_fraction) * static_cast<double>(cfg.horizon)));

  world.corpus.users.resize(static_cast<std::size_t>(cfg.n_users));
  for (int u = 0; u < cfg.n_users; ++u) {
    const auto uid = static_cast<std::uint32_t>(u);
    Rng rng = make_rng(cfg.seed, "user", uid);
    auto& out = world.corpus.users[uid];

    const int n_sessions =
        cfg.sessions_min + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cfg.sessions_max - cfg.sessions_min + 1)));
    const Timestamp slot = cfg.horizon / n_sessions;
    std::uint32_t session_id = 0;
    for (int s = 0; s < n_sessions; ++s) {
      const int len = cfg.session_len_min +
                      static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cfg.session_len_max - cfg.session_len_min + 1)));
      const Timestamp start = s * slot + static_cast<Timestamp>(uniform_index(rng, static_cast<std::uint64_t>(slot - len + 1)));
      const Timestamp end = start + len;

      std::uint32_t group_id = 0;
      Timestamp t = start;
      while (t < end) {
        const auto avail = index.available_set(t);
        if (avail.empty()) {
          ++t;
          continue;
        }
        std::vector<double> logits(avail.size());
        for (std::size_t k = 0; k < avail.size(); ++k)
          logits[k] = world.preference_logit(uid, avail[k], t);
        const ItemId item = avail[draw_softmax(rng, logits)];

        std::optional<std::string> query;
        if (uniform01(rng) < cfg.search_prob) {
          const auto& qs = item_queries[item];
          query = *qs[uniform_index(rng, qs.size())];
        }
        // Browse, then escalate while the item stays online and the session lasts.
        int feedback = 0;
        while (true) {
          Interaction a;
          a.user_id = uid;
          a.item_id = item;
          a.feedback = feedback;
          a.timestamp = t;
          a.session_id = session_id;
          a.group_id = group_id++;
          a.delta = t >= delta_from;
          if (feedback == 0) a.triggering_query = query;
          out.push_back(std::move(a));
          ++t;
          if (feedback + 1 >= cfg.feedback_types || t >= end || !catalog.availability(item, t) ||
              uniform01(rng) >= cfg.escalate_prob)
            break;
          ++feedback;
        }
      }
      if (group_id > 0) ++session_id;
    }
  }
  return world;
}

Corpus generate_corpus(const GenConfig& config) { return generate_world(config).corpus; }

std::string format_interactions(const Corpus& corpus) {
  std::string out = "# users " + std::to_string(corpus.users.size()) + "\n";
  out += "# user_id\titem_id\tfeedback\ttimestamp\tsession_id\tgroup_id\tdelta\tquery_text\n";
  for (const auto& list : corpus.users) {
    for (const auto& a : list) {
      if (a.triggering_query && a.triggering_query->find_first_of("\t\n") != std::string::npos)
        throw ValidationError("query text may not contain tabs or newlines");
      out += std::to_string(a.user_id) + '\t' + std::to_string(a.item_id) + '\t' +
             std::to_string(a.feedback) + '\t' + std::to_string(a.timestamp) + '\t' +
             std::to_string(a.session_id) + '\t' + std::to_string(a.group_id) + '\t' +
             (a.delta ? "1" : "0") + '\t' + a.triggering_query.value_or("") + '\n';
    }
  }
  return out;
}

std::vector<std::vector<Interaction>> parse_interactions(std::string_view content) {
  std::vector<std::vector<Interaction>> users;
  bool complete = true;
  const auto all = text::lines(content, &complete);
  std::size_t last_valid = 0;
  bool have_count = false;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto line = all[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto fail = [&](const std::string& why) {
      return ParseError("interactions line " + std::to_string(line_no) + ": " + why +
                            " (last valid line " + std::to_string(last_valid) + ")",
                        line_no);
    };
    if (i + 1 == all.size() && !complete) throw fail("truncated record");
    if (line.empty()) {
      last_valid = line_no;
      continue;
    }
    if (line.front() == '#') {
      constexpr std::string_view kUsers = "# users ";
      if (line.substr(0, kUsers.size()) == kUsers) {
        std::size_t n = 0;
        if (!text::parse_number(line.substr(kUsers.size()), n)) throw fail("bad user count");
        users.resize(n);
        have_count = true;
      }
      last_valid = line_no;
      continue;
    }
    const auto f = text::split(line, '\t');
    if (f.size() != 8) throw fail("expected 8 tab-separated fields, got " + std::to_string(f.size()));
    Interaction a;
    int delta = 0;
    if (!text::parse_number(f[0], a.user_id)) throw fail("bad user_id");
    if (!text::parse_number(f[1], a.item_id)) throw fail("bad item_id");
    if (!text::parse_number(f[2], a.feedback)) throw fail("bad feedback");
    if (!text::parse_number(f[3], a.timestamp)) throw fail("bad timestamp");
    if (!text::parse_number(f[4], a.session_id)) throw fail("bad session_id");
    if (!text::parse_number(f[5], a.group_id)) throw fail("bad group_id");
    if (!text::parse_number(f[6], delta) || (delta != 0 && delta != 1)) throw fail("bad delta");
    a.delta = delta == 1;
    if (!f[7].empty()) a.triggering_query = std::string(f[7]);
    if (!have_count && a.user_id >= users.size()) users.resize(a.user_id + 1);
    if (a.user_id >= users.size()) throw fail("user_id beyond declared user count");
    auto& list = users[a.user_id];
    if (!list.empty() && list.back().timestamp > a.timestamp)
      throw fail("timestamps must be nondecreasing within a user");
    list.push_back(std::move(a));
    last_valid = line_no;
  }
  return users;
}

void serialize_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  write_catalog(corpus.catalog, dir / "catalog.tsv");
  text::write_file(dir / "interactions.tsv", format_interactions(corpus));
}

Corpus parse_corpus(const std::filesystem::path& dir) {
  Corpus c;
  c.catalog = read_catalog(dir / "catalog.tsv");
  c.users = parse_interactions(text::read_file(dir / "interactions.tsv"));
  for (const auto& list : c.users)
    for (const auto& a : list)
      if (a.item_id >= c.catalog.size())
        throw ValidationError("interaction references unknown item " + std::to_string(a.item_id));
  return c;
}

std::vector<std::string> collect_user_queries(const Corpus& corpus) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& list : corpus.users)
    for (const auto& a : list)
      if (a.triggering_query && seen.insert(*a.triggering_query).second)
        out.push_back(*a.triggering_query);
  return out;
}

}  // namespace qdrec
