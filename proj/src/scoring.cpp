// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "qdrec/dsfnet.hpp"
#include "qdrec/error.hpp"
#include "qdrec/kernels.hpp"
#include "qdrec/masking.hpp"

namespace qdrec {

Matrix sequence_mask(const EventSequence& seq, const ModelConfig& cfg) {
  return build_mask(seq, cfg.session_mask);
}

namespace {

FlopReport make_report(const EventSequence& seq, std::span<const CandidateGroup> groups,
                       const ModelConfig& cfg) {
  FlopReport f;
  f.n = seq.size();
  f.j = groups.size();
  for (const auto& g : groups) f.cprime = std::max(f.cprime, g.candidates.size());
  f.d = cfg.d;
  f.h = cfg.layers;
  f.layer.assign(cfg.layers, 0);
  return f;
}

void check_groups(const EventSequence& seq, std::span<const CandidateGroup> groups) {
  for (const auto& g : groups) {
    if (g.placeholder >= seq.placeholders.size() ||
        seq.placeholders[g.placeholder].pos != g.placeholder_pos)
      throw ValidationError("candidate group does not match a placeholder of the sequence");
    const auto& t = seq.tokens[g.placeholder_pos];
    if (t.kind != TokenKind::kQ || t.q_valid)
      throw ValidationError("candidate scoring needs invalid-key placeholders at position " +
                            std::to_string(g.placeholder_pos));
  }
}

// DSFNet and ranking head over the rows of one group.
std::vector<double> head_logits(const Matrix& rows, const EventSequence& seq,
                                const CandidateGroup& g, const ModelParams& p,
                                const ModelConfig& cfg) {
  const Matrix r = scenario_context(seq.placeholders[g.placeholder], seq.user, p);
  const Matrix z = ranking_head(dsfnet_forward(rows, r, p.dsf, cfg.dsfnet), p);
  std::vector<double> out(z.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z(i, 0);
  return out;
}

struct CandidateBlock {
  Matrix x;  // C x d
  RowCoords coords;
};

CandidateBlock candidate_block(const EventSequence& seq, std::span<const CandidateGroup> groups,
                               const ModelParams& p) {
  std::size_t c = 0;
  for (const auto& g : groups) c += g.candidates.size();
  CandidateBlock b{Matrix(c, p.type_emb.cols()), {}};
  std::size_t row = 0;
  for (const auto& g : groups) {
    const auto& ph = seq.placeholders[g.placeholder];
    for (ItemId item : g.candidates) {
      const Matrix f = candidate_feature(ph, item, p);
      std::copy(f.row(0).begin(), f.row(0).end(), b.x.row(row++).begin());
      b.coords.pos.push_back(static_cast<std::int64_t>(g.placeholder_pos));
      b.coords.t.push_back(ph.timestamp);
    }
  }
  return b;
}

std::vector<std::vector<double>> block_logits(const Matrix& out, const EventSequence& seq,
                                              std::span<const CandidateGroup> groups,
                                              const ModelParams& p, const ModelConfig& cfg) {
  std::vector<std::vector<double>> logits;
  std::size_t row = 0;
  for (const auto& g : groups) {
    std::vector<std::size_t> idx(g.candidates.size());
    for (auto& i : idx) i = row++;
    logits.push_back(head_logits(select_rows(out, idx), seq, g, p, cfg));
  }
  return logits;
}

enum class CandidatePath { kKv, kDiag };

CandidateScores score_cached(const EventSequence& seq, std::span<const CandidateGroup> groups,
                             const ModelParams& p, const ModelConfig& cfg, CandidatePath path) {
  check_groups(seq, groups);
  CandidateScores res;
  res.flops = make_report(seq, groups, cfg);
  const Matrix base = sequence_mask(seq, cfg);
  const RowCoords coords = sequence_coords(seq);

  KVCache cache;
  {
    kernels::MacScope scope;
    stack_forward(token_features(seq, p), base, coords, p, cfg, &cache);
    res.flops.stage1 = scope.elapsed();
  }
  kernels::MacScope stage2;
  CandidateBlock cb = candidate_block(seq, groups, p);
  const std::size_t n = seq.size(), c = cb.x.rows();
  if (c == 0) {
    res.flops.stage2 = stage2.elapsed();
    return res;
  }

  Matrix rows_mask;
  RowCoords all_coords;
  if (path == CandidatePath::kKv) {
    const Matrix full = expand_mask(base, groups);
    rows_mask = Matrix(c, n + c);
    for (std::size_t r = 0; r < c; ++r)
      std::copy(full.row(n + r).begin(), full.row(n + r).end(), rows_mask.row(r).begin());
    all_coords = coords;
    all_coords.pos.insert(all_coords.pos.end(), cb.coords.pos.begin(), cb.coords.pos.end());
    all_coords.t.insert(all_coords.t.end(), cb.coords.t.begin(), cb.coords.t.end());
  } else {
    rows_mask = candidate_mask_rows(base, groups);
  }

  Matrix& x = cb.x;
  for (std::size_t l = 0; l < p.qdb.size(); ++l) {
    kernels::MacScope layer_scope;
    const auto& lp = p.qdb[l];
    const QdbProjections pr = qdb_project(x, lp);
    Matrix o;
    if (path == CandidatePath::kKv) {
      const Matrix k = concat_rows(cache.k[l], pr.k);
      const Matrix v = concat_rows(cache.v[l], pr.v);
      o = matmul(qdb_gated_scores(pr.q, k, rows_mask, cb.coords, all_coords, lp, cfg), v);
    } else {
      o = matmul(qdb_gated_scores(pr.q, cache.k[l], rows_mask, cb.coords, coords, lp, cfg),
                 cache.v[l]);
      const double self_bias = relative_bias_at(0, 0, lp, cfg);
      for (std::size_t i = 0; i < c; ++i)
        kernels::axpy(silu(kernels::dot(pr.q.row(i), pr.k.row(i)) + self_bias), pr.v.row(i),
                      o.row(i));
    }
    Matrix y = qdb_output(o, pr.w, lp, cfg);
    if (!all_finite(y))
      throw NumericError("qdb layer " + std::to_string(l) + ": non-finite candidate output");
    add_inplace(x, y);
    res.flops.layer[l] = layer_scope.elapsed();
  }
  res.logits = block_logits(x, seq, groups, p, cfg);
  res.flops.stage2 = stage2.elapsed();
  return res;
}

}  // namespace

CandidateScores score_candidates_naive(const EventSequence& seq,
                                       std::span<const CandidateGroup> groups,
                                       const ModelParams& p, const ModelConfig& cfg) {
  check_groups(seq, groups);
  CandidateScores res;
  res.flops = make_report(seq, groups, cfg);
  const Matrix mask = sequence_mask(seq, cfg);
  const RowCoords coords = sequence_coords(seq);
  const Matrix x = token_features(seq, p);
  kernels::MacScope scope;
  for (const auto& g : groups) {
    const auto& ph = seq.placeholders[g.placeholder];
    Matrix rows(g.candidates.size(), cfg.d);
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      Matrix xi = x;
      const Matrix f = candidate_feature(ph, g.candidates[i], p);
      std::copy(f.row(0).begin(), f.row(0).end(), xi.row(g.placeholder_pos).begin());
      Matrix h = xi;
      for (std::size_t l = 0; l < p.qdb.size(); ++l) {
        kernels::MacScope layer_scope;
        Matrix y = qdb_layer_reference(h, mask, coords, p.qdb[l], cfg);
        if (!all_finite(y))
          throw NumericError("qdb layer " + std::to_string(l) + ": non-finite output");
        add_inplace(h, y);
        res.flops.layer[l] += layer_scope.elapsed();
      }
      std::copy(h.row(g.placeholder_pos).begin(), h.row(g.placeholder_pos).end(),
                rows.row(i).begin());
    }
    res.logits.push_back(head_logits(rows, seq, g, p, cfg));
  }
  res.flops.stage2 = scope.elapsed();
  return res;
}

CandidateScores score_candidates_kv(const EventSequence& seq,
                                    std::span<const CandidateGroup> groups,
                                    const ModelParams& p, const ModelConfig& cfg) {
  return score_cached(seq, groups, p, cfg, CandidatePath::kKv);
}

CandidateScores score_candidates_diag(const EventSequence& seq,
                                      std::span<const CandidateGroup> groups,
                                      const ModelParams& p, const ModelConfig& cfg) {
  return score_cached(seq, groups, p, cfg, CandidatePath::kDiag);
}

KVCache build_kv_cache(const EventSequence& seq, const ModelParams& p, const ModelConfig& cfg) {
  KVCache cache;
  stack_forward(token_features(seq, p), sequence_mask(seq, cfg), sequence_coords(seq), p, cfg,
                &cache);
  return cache;
}

double complexity_threshold_value(std::size_t j, std::size_t cprime) {
  return static_cast<double>(j) * (1.0 + std::sqrt(1.0 + 4.0 * static_cast<double>(cprime))) /
         2.0;
}

bool complexity_threshold(std::size_t n, std::size_t j, std::size_t cprime) {
  return static_cast<double>(n) > complexity_threshold_value(j, cprime);
}

Matrix encode_placeholders(const EventSequence& seq, const ModelParams& p,
                           const ModelConfig& cfg) {
  Matrix out(seq.placeholders.size(), cfg.d);
  if (seq.placeholders.empty()) return out;
  const Matrix h = stack_forward(token_features(seq, p), sequence_mask(seq, cfg),
                                 sequence_coords(seq), p, cfg);
  for (std::size_t j = 0; j < seq.placeholders.size(); ++j) {
    const auto& ph = seq.placeholders[j];
    const std::size_t idx[] = {ph.pos};
    const Matrix o = dsfnet_forward(select_rows(h, idx), scenario_context(ph, seq.user, p), p.dsf,
                                    cfg.dsfnet);
    std::copy(o.row(0).begin(), o.row(0).end(), out.row(j).begin());
  }
  return out;
}

std::vector<double> retrieval_scores(std::span<const double> o, const Matrix& item_emb,
                                     std::span<const ItemId> items) {
  if (items.empty()) throw ValidationError("retrieval_scores: empty candidate set");
  if (o.size() != item_emb.cols())
    throw ValidationError("retrieval_scores: output width does not match the embeddings");
  std::vector<double> s(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] >= item_emb.rows()) throw LookupError("unknown item id " + std::to_string(items[i]));
    s[i] = kernels::dot(o, item_emb.row(items[i]));
  }
  return s;
}

ScoringCase random_scoring_case(std::size_t n, std::size_t j, std::size_t cprime,
                                const ModelConfig& cfg, Rng& rng) {
  if (n < 3 * j + 1) throw ValidationError("random_scoring_case: need n >= 3j + 1");
  if (cprime == 0 || cfg.n_items < cprime)
    throw ValidationError("random_scoring_case: need 1 <= cprime <= n_items");
  ScoringCase out;
  auto& seq = out.seq;
  seq.user = static_cast<std::uint32_t>(uniform_index(rng, cfg.n_users));

  std::uint32_t session = 0, group = 0;
  Timestamp t = 0;
  int scenario = 0;
  std::size_t groups_in_session = 0;
  std::vector<std::size_t> q_positions;
  auto push = [&](TokenKind kind, int vocab) {
    Token tok;
    tok.kind = kind;
    tok.vocab_id = vocab;
    tok.timestamp = t;
    tok.session_id = session;
    tok.group_id = group;
    seq.tokens.push_back(std::move(tok));
  };
  push(TokenKind::kS, scenario);
  while (seq.tokens.size() < n) {
    if (groups_in_session > 0 && uniform01(rng) < 0.3) {
      ++session;
      groups_in_session = 0;
      t += 1 + static_cast<Timestamp>(uniform_index(rng, 5));
      if (uniform01(rng) < 0.5 && seq.tokens.size() + 1 < n) {
        scenario = static_cast<int>(uniform_index(rng, cfg.n_scenarios));
        push(TokenKind::kS, scenario);
      }
    }
    ++group;
    ++groups_in_session;
    t += static_cast<Timestamp>(uniform_index(rng, 3));
    q_positions.push_back(seq.tokens.size());
    push(TokenKind::kQ, 0);
    if (seq.tokens.size() < n) push(TokenKind::kI, static_cast<int>(uniform_index(rng, cfg.n_items)));
    if (seq.tokens.size() < n) push(TokenKind::kF, static_cast<int>(uniform_index(rng, cfg.n_feedback)));
  }

  // Placeholders: j distinct Q positions in ascending order.
  std::vector<std::size_t> pick = q_positions;
  for (std::size_t i = 0; i < j; ++i)
    std::swap(pick[i], pick[i + uniform_index(rng, pick.size() - i)]);
  pick.resize(j);
  std::sort(pick.begin(), pick.end());
  std::vector<char> is_ph(n, 0);
  for (auto p : pick) is_ph[p] = 1;

  for (auto pos : q_positions) {
    auto& tok = seq.tokens[pos];
    if (!is_ph[pos] && uniform01(rng) < 0.3) {
      tok.q.kind = PayloadKind::kSearchQuery;
      tok.q.embedding = embed_query("q" + std::to_string(uniform_index(rng, 1000)), cfg.d);
      tok.q_valid = true;
    } else {
      tok.q.kind = PayloadKind::kUniversal;
    }
  }
  int scn = 0;
  std::uint32_t last_session = 0;
  bool seen_group = false;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const auto& tok = seq.tokens[pos];
    if (tok.kind == TokenKind::kS) scn = tok.vocab_id;
    if (!is_ph[pos]) continue;
    Placeholder ph;
    ph.pos = pos;
    ph.timestamp = tok.timestamp;
    ph.delta = true;
    ph.scenario = scn;
    ph.page = seen_group && last_session == tok.session_id ? 1 : 0;
    if (pos + 1 < n && seq.tokens[pos + 1].kind == TokenKind::kI)
      ph.target = static_cast<ItemId>(seq.tokens[pos + 1].vocab_id);
    else
      ph.target = static_cast<ItemId>(uniform_index(rng, cfg.n_items));
    seq.placeholders.push_back(std::move(ph));
    last_session = tok.session_id;
    seen_group = true;
  }

  for (std::size_t g = 0; g < seq.placeholders.size(); ++g) {
    const auto& ph = seq.placeholders[g];
    CandidateGroup cg;
    cg.placeholder = g;
    cg.placeholder_pos = ph.pos;
    cg.draw_time = ph.timestamp;
    std::vector<ItemId> items(cfg.n_items);
    for (ItemId i = 0; i < items.size(); ++i) items[i] = i;
    std::swap(items[0], items[*ph.target]);
    for (std::size_t i = 1; i < cprime; ++i)
      std::swap(items[i], items[i + uniform_index(rng, items.size() - i)]);
    items.resize(cprime);
    cg.positive_index = uniform_index(rng, cprime);
    std::swap(items[0], items[cg.positive_index]);
    cg.candidates = std::move(items);
    out.groups.push_back(std::move(cg));
  }
  return out;
}

}  // namespace qdrec
