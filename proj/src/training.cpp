// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "qdrec/config.hpp"
#include "qdrec/error.hpp"
#include "qdrec/evalx.hpp"
#include "qdrec/kernels.hpp"
#include "qdrec/masking.hpp"
#include "qdrec/rng.hpp"
#include "qdrec/scoring.hpp"
#include "text_util.hpp"

namespace qdrec {

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw ValidationError("train config: " + why); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be a finite nonnegative number");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    fail("moment coefficients must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(ranking_weight >= 0.0)) fail("ranking_weight must be nonnegative");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0, 1]");
  if (scenario_period <= 0 || n_scenarios <= 0) fail("scenario_period and n_scenarios must be positive");
  if (eval_negatives == 0) fail("eval_negatives must be positive");
  sampler.validate();
}

TrainConfig TrainConfig::from_config(const KvConfig& c) {
  TrainConfig t;
  const char* s = "train";
  auto sz = [&](const char* sec, const char* key, std::size_t v) {
    const auto x = c.get(sec, key, static_cast<std::int64_t>(v));
    if (x < 0) throw ValidationError(std::string("config key '") + sec + "." + key + "' is negative");
    return static_cast<std::size_t>(x);
  };
  t.lr = c.get(s, "lr", t.lr);
  t.batch_size = sz(s, "batch_size", t.batch_size);
  t.epochs = sz(s, "epochs", t.epochs);
  t.beta1 = c.get(s, "beta1", t.beta1);
  t.beta2 = c.get(s, "beta2", t.beta2);
  t.adam_eps = c.get(s, "adam_eps", t.adam_eps);
  t.seed = static_cast<std::uint64_t>(c.get(s, "seed", static_cast<std::int64_t>(t.seed)));
  t.ranking_weight = c.get(s, "ranking_weight", t.ranking_weight);
  t.beta = c.get(s, "beta", t.beta);
  t.max_len = sz(s, "max_len", t.max_len);
  t.workers = sz(s, "workers", t.workers);
  t.finetune_search_epochs = sz(s, "finetune_search_epochs", t.finetune_search_epochs);
  t.scenario_period = c.get(s, "scenario_period", static_cast<std::int64_t>(t.scenario_period));
  t.n_scenarios = c.get(s, "n_scenarios", t.n_scenarios);
  t.eval_every = sz(s, "eval_every", t.eval_every);
  const std::string protocol = c.get(s, "eval_protocol", "sampled");
  if (protocol != "sampled" && protocol != "aligned")
    throw ValidationError("config key 'train.eval_protocol': expected sampled or aligned, got " +
                          protocol);
  t.eval_aligned = protocol == "aligned";
  t.eval_negatives = sz(s, "eval_negatives", t.eval_negatives);
  const char* a = "ablation";
  t.no_S = c.get(a, "no_S", t.no_S);
  t.no_search_queries = c.get(a, "no_search_queries", t.no_search_queries);
  t.no_session_mask = c.get(a, "no_session_mask", t.no_session_mask);
  t.no_dsfnet = c.get(a, "no_dsfnet", t.no_dsfnet);
  t.no_relative_bias = c.get(a, "no_relative_bias", t.no_relative_bias);
  t.sampler = SamplerConfig::from_config(c);
  t.validate();
  return t;
}

ModelConfig TrainConfig::model_config(ModelConfig base) const {
  if (no_session_mask) base.session_mask = false;
  if (no_dsfnet) base.dsfnet = false;
  if (no_relative_bias) base.relative_bias = false;
  return base;
}

SequenceOptions TrainConfig::sequence_options(const ModelConfig& model) const {
  SequenceOptions o;
  o.beta = beta;
  o.max_len = max_len;
  o.scenario_tokens = !no_S;
  o.search_queries = !no_search_queries;
  o.scenario_period = scenario_period;
  o.n_scenarios = n_scenarios;
  o.query_dim = model.d;
  o.ranking_mode = ranking_weight > 0.0;
  return o;
}

double infonce_loss(std::span<const std::vector<double>> logits,
                    std::span<const std::size_t> positives, std::span<const bool> delta) {
  if (logits.size() != positives.size() || logits.size() != delta.size())
    throw ValidationError("infonce_loss: need one positive and one flag per group");
  if (logits.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (!delta[j]) continue;
    const auto& z = logits[j];
    if (z.empty()) throw ValidationError("infonce_loss: empty candidate set at group " + std::to_string(j));
    if (positives[j] >= z.size())
      throw ValidationError("infonce_loss: positive index out of range at group " + std::to_string(j));
    const double mx = *std::max_element(z.begin(), z.end());
    double se = 0.0;
    for (double v : z) se += std::exp(v - mx);
    total += mx + std::log(se) - z[positives[j]];
  }
  return total / static_cast<double>(logits.size());
}

double ranking_loss(std::span<const double> logits, std::span<const double> labels) {
  if (logits.size() != labels.size()) throw ValidationError("ranking_loss: one label per logit");
  if (logits.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    total += std::max(z, 0.0) - labels[i] * z + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(logits.size());
}

ParamVars bind_params(ad::Tape& tape, const ModelParams& p, ModelParams* grads,
                      const ModelConfig& cfg) {
  auto bind = [&](const Matrix& m, Matrix* g) { return tape.param(m, grads ? g : nullptr); };
  ModelParams* g = grads;
  auto sink = [&](auto member) -> Matrix* { return g ? &(g->*member) : nullptr; };
  ParamVars v;
  v.item_emb = bind(p.item_emb, sink(&ModelParams::item_emb));
  v.scenario_emb = bind(p.scenario_emb, sink(&ModelParams::scenario_emb));
  v.feedback_emb = bind(p.feedback_emb, sink(&ModelParams::feedback_emb));
  v.type_emb = bind(p.type_emb, sink(&ModelParams::type_emb));
  v.universal = bind(p.universal, sink(&ModelParams::universal));
  v.query_proj = bind(p.query_proj, sink(&ModelParams::query_proj));
  v.page_emb = bind(p.page_emb, sink(&ModelParams::page_emb));
  v.task_emb = bind(p.task_emb, sink(&ModelParams::task_emb));
  v.user_emb = bind(p.user_emb, sink(&ModelParams::user_emb));
  for (std::size_t l = 0; l < p.qdb.size(); ++l) {
    const auto& q = p.qdb[l];
    QdbLayerParams* gq = g ? &g->qdb[l] : nullptr;
    ParamVars::Qdb x;
    x.w1 = bind(q.w1, gq ? &gq->w1 : nullptr);
    x.b1 = bind(q.b1, gq ? &gq->b1 : nullptr);
    x.w2 = bind(q.w2, gq ? &gq->w2 : nullptr);
    x.b2 = bind(q.b2, gq ? &gq->b2 : nullptr);
    const bool rab = gq && cfg.relative_bias;
    x.rab_pos = tape.param(q.rab_pos, rab ? &gq->rab_pos : nullptr);
    x.rab_time = tape.param(q.rab_time, rab ? &gq->rab_time : nullptr);
    v.qdb.push_back(x);
  }
  v.filter_w = bind(p.dsf.filter_w, g ? &g->dsf.filter_w : nullptr);
  v.filter_b = bind(p.dsf.filter_b, g ? &g->dsf.filter_b : nullptr);
  for (std::size_t l = 0; l < p.dsf.layers.size(); ++l) {
    std::vector<ParamVars::Dsf> layer;
    for (std::size_t k = 0; k < p.dsf.layers[l].size(); ++k) {
      const auto& s = p.dsf.layers[l][k];
      DsfScenarioParams* gs = g ? &g->dsf.layers[l][k] : nullptr;
      ParamVars::Dsf x;
      x.w = bind(s.w, gs ? &gs->w : nullptr);
      x.b = bind(s.b, gs ? &gs->b : nullptr);
      x.gate_w1 = bind(s.gate_w1, gs ? &gs->gate_w1 : nullptr);
      x.gate_b1 = bind(s.gate_b1, gs ? &gs->gate_b1 : nullptr);
      x.gate_w2 = bind(s.gate_w2, gs ? &gs->gate_w2 : nullptr);
      x.gate_b2 = bind(s.gate_b2, gs ? &gs->gate_b2 : nullptr);
      layer.push_back(x);
    }
    v.dsf.push_back(std::move(layer));
  }
  v.head_w1 = bind(p.head_w1, sink(&ModelParams::head_w1));
  v.head_b1 = bind(p.head_b1, sink(&ModelParams::head_b1));
  v.head_w2 = bind(p.head_w2, sink(&ModelParams::head_w2));
  v.head_b2 = bind(p.head_b2, sink(&ModelParams::head_b2));
  return v;
}

namespace {

// Flat indices selecting whole rows of a table with `cols` columns.
std::vector<std::size_t> row_gather(std::span<const std::size_t> rows, std::size_t cols) {
  std::vector<std::size_t> idx;
  idx.reserve(rows.size() * cols);
  for (auto r : rows)
    for (std::size_t c = 0; c < cols; ++c) idx.push_back(r * cols + c);
  return idx;
}

ad::Var gather_rows(ad::Tape& tape, ad::Var table, std::span<const std::size_t> rows,
                    const char* what) {
  const Matrix& t = tape.value(table);
  for (auto r : rows)
    if (r >= t.rows())
      throw LookupError(std::string(what) + " id " + std::to_string(r) + " out of range");
  return tape.gather_flat(table, row_gather(rows, t.cols()), rows.size(), t.cols());
}

Matrix stack_rows(const std::vector<const std::vector<double>*>& rows, std::size_t cols) {
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r]->size() != cols)
      throw ValidationError("query embedding has dimension " + std::to_string(rows[r]->size()) +
                            ", expected " + std::to_string(cols));
    std::copy(rows[r]->begin(), rows[r]->end(), m.row(r).begin());
  }
  return m;
}

}  // namespace

ad::Var tape_features(ad::Tape& tape, const ParamVars& v, const EventSequence& seq,
                      std::span<const CandidateGroup> groups) {
  const std::size_t d = tape.value(v.type_emb).cols();
  const std::size_t qdim = tape.value(v.query_proj).rows();
  std::vector<std::size_t> kinds;
  // Content sources in row order; each row lands in exactly one bucket.
  std::vector<std::size_t> s_ids, i_ids, f_ids, u_rows;
  std::vector<const std::vector<double>*> q_rows;
  std::vector<std::size_t> bucket_of, slot_of;
  enum { kScn, kItem, kFb, kUni, kQry };
  auto place = [&](int bucket, std::size_t slot) {
    bucket_of.push_back(static_cast<std::size_t>(bucket));
    slot_of.push_back(slot);
  };
  for (const auto& t : seq.tokens) {
    kinds.push_back(static_cast<std::size_t>(t.kind));
    const auto id = static_cast<std::size_t>(t.vocab_id);
    switch (t.kind) {
      case TokenKind::kS: place(kScn, s_ids.size()); s_ids.push_back(id); break;
      case TokenKind::kI: place(kItem, i_ids.size()); i_ids.push_back(id); break;
      case TokenKind::kF: place(kFb, f_ids.size()); f_ids.push_back(id); break;
      case TokenKind::kQ:
        if (t.q.kind == PayloadKind::kSearchQuery) {
          place(kQry, q_rows.size());
          q_rows.push_back(&t.q.embedding);
        } else {
          place(kUni, u_rows.size());
          u_rows.push_back(0);
        }
        break;
    }
  }
  std::vector<const std::vector<double>*> cand_q;
  std::vector<std::size_t> cand_q_slot;
  for (const auto& g : groups) {
    const auto& ph = seq.placeholders.at(g.placeholder);
    const bool q = ph.search && !ph.query_embedding.empty();
    for (ItemId item : g.candidates) {
      kinds.push_back(static_cast<std::size_t>(TokenKind::kQ));
      place(kItem, i_ids.size());
      i_ids.push_back(item);
      cand_q_slot.push_back(q ? cand_q.size() : static_cast<std::size_t>(-1));
      if (q) cand_q.push_back(&ph.query_embedding);
    }
  }
  const std::size_t n = kinds.size();
  const ad::Var type = gather_rows(tape, v.type_emb, kinds, "token type");

  std::vector<ad::Var> parts;
  std::size_t offsets[5] = {0, 0, 0, 0, 0};
  std::size_t total = 0;
  auto add_part = [&](int bucket, std::size_t count, auto make) {
    offsets[bucket] = total;
    if (count == 0) return;
    parts.push_back(make());
    total += count;
  };
  add_part(kScn, s_ids.size(), [&] { return gather_rows(tape, v.scenario_emb, s_ids, "scenario"); });
  add_part(kItem, i_ids.size(), [&] { return gather_rows(tape, v.item_emb, i_ids, "item"); });
  add_part(kFb, f_ids.size(), [&] { return gather_rows(tape, v.feedback_emb, f_ids, "feedback"); });
  add_part(kUni, u_rows.size(), [&] { return gather_rows(tape, v.universal, u_rows, "universal"); });
  add_part(kQry, q_rows.size(), [&] {
    return tape.matmul(tape.constant(stack_rows(q_rows, qdim)), v.query_proj);
  });
  if (n == 0) return tape.constant(Matrix(0, d));
  std::vector<std::size_t> perm(n);
  for (std::size_t r = 0; r < n; ++r) perm[r] = offsets[bucket_of[r]] + slot_of[r];
  const ad::Var content = tape.select_rows(tape.concat_rows(parts), std::move(perm));
  ad::Var x = tape.add(type, content);
  if (cand_q.empty()) return x;

  // Projected query of search placeholders added to their candidate rows.
  const std::size_t nc = cand_q_slot.size();
  const ad::Var projected = tape.matmul(tape.constant(stack_rows(cand_q, qdim)), v.query_proj);
  const ad::Var padded = tape.concat_rows(std::vector<ad::Var>{projected, tape.constant(Matrix(1, d))});
  std::vector<std::size_t> pick(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t c = r + nc >= n ? r + nc - n : static_cast<std::size_t>(-1);
    pick[r] = r + nc >= n && cand_q_slot[c] != static_cast<std::size_t>(-1) ? cand_q_slot[c]
                                                                           : cand_q.size();
  }
  return tape.add(x, tape.select_rows(padded, std::move(pick)));
}

ad::Var tape_stack(ad::Tape& tape, const ParamVars& v, ad::Var x, const Matrix& mask,
                   const std::vector<std::int64_t>& pos, const std::vector<Timestamp>& t,
                   const ModelConfig& cfg) {
  const std::size_t n = tape.value(x).rows(), d = tape.value(x).cols();
  if (pos.size() != n || t.size() != n)
    throw ValidationError("tape_stack: coordinates do not cover every row");
  if (mask.rows() != n || mask.cols() != n) throw ValidationError("tape_stack: mask shape");
  std::vector<std::size_t> rab_idx;
  Matrix neg_dt(n, n);
  if (cfg.relative_bias) {
    const std::int64_t m = cfg.max_dist;
    rab_idx.resize(n * n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < n; ++k) {
        rab_idx[r * n + k] = static_cast<std::size_t>(std::clamp<std::int64_t>(pos[r] - pos[k], -m, m) + m);
        const Timestamp dt = t[r] - t[k];
        neg_dt(r, k) = -static_cast<double>(dt < 0 ? -dt : dt);
      }
    }
  }
  ad::Var h = x;
  for (const auto& q : v.qdb) {
    const ad::Var u = tape.silu(tape.affine(h, q.w1, q.b1));
    const ad::Var gate = tape.slice_cols(u, 0, d);
    const ad::Var qv = tape.slice_cols(u, d, 2 * d);
    const ad::Var kv = tape.slice_cols(u, 2 * d, 3 * d);
    const ad::Var vv = tape.slice_cols(u, 3 * d, 4 * d);
    ad::Var s = tape.matmul_nt(qv, kv);
    if (cfg.relative_bias) {
      const ad::Var bias = tape.add(tape.gather_flat(q.rab_pos, rab_idx, n, n),
                                    tape.scale(tape.constant(neg_dt), q.rab_time));
      s = tape.add(s, bias);
    }
    const ad::Var a = tape.mul_const(tape.silu(s), mask);
    const ad::Var y = tape.affine(
        tape.hadamard(tape.layer_norm_rows(tape.matmul(a, vv), cfg.ln_eps), gate), q.w2, q.b2);
    h = tape.add(h, y);
  }
  return h;
}

ad::Var tape_dsfnet(ad::Tape& tape, const ParamVars& v, ad::Var x, ad::Var r,
                    const ModelConfig& cfg) {
  const std::size_t depth = v.dsf.size();
  ad::Var h = x;
  if (!cfg.dsfnet) {
    for (std::size_t l = 0; l < depth; ++l) {
      const auto& s = v.dsf[l].at(0);
      h = tape.affine(h, s.w, s.b);
      if (l + 1 < depth) h = tape.silu(h);
    }
    return h;
  }
  h = tape.hadamard(x, tape.sigmoid(tape.affine(tape.concat_cols(x, r), v.filter_w, v.filter_b)));
  for (std::size_t l = 0; l < depth; ++l) {
    std::optional<ad::Var> y;
    for (const auto& s : v.dsf[l]) {
      const ad::Var logit =
          tape.affine(tape.silu(tape.affine(r, s.gate_w1, s.gate_b1)), s.gate_w2, s.gate_b2);
      const ad::Var gamma = tape.scale(tape.sigmoid(logit), 2.0);
      const ad::Var term = tape.scale_rows(tape.affine(h, s.w, s.b), gamma);
      y = y ? tape.add(*y, term) : term;
    }
    h = l + 1 < depth ? tape.silu(*y) : *y;
  }
  return h;
}

ad::Var tape_context(ad::Tape& tape, const ParamVars& v, const EventSequence& seq,
                     std::span<const std::size_t> placeholders) {
  std::vector<std::size_t> scn, page, task, user;
  for (auto j : placeholders) {
    const auto& ph = seq.placeholders.at(j);
    scn.push_back(static_cast<std::size_t>(ph.scenario));
    page.push_back(ph.page ? 1 : 0);
    task.push_back(ph.search ? 1 : 0);
    user.push_back(seq.user);
  }
  ad::Var r = gather_rows(tape, v.scenario_emb, scn, "scenario");
  r = tape.concat_cols(r, gather_rows(tape, v.page_emb, page, "page"));
  r = tape.concat_cols(r, gather_rows(tape, v.task_emb, task, "task"));
  return tape.concat_cols(r, gather_rows(tape, v.user_emb, user, "user"));
}

ad::Var record_example_loss(ad::Tape& tape, const ParamVars& v, const TrainExample& ex,
                            const ModelConfig& cfg, double ranking_weight) {
  const auto& seq = ex.seq;
  const auto& groups = ex.groups;
  if (groups.empty()) return tape.constant(Matrix(1, 1));
  for (const auto& g : groups) {
    if (g.placeholder >= seq.placeholders.size() ||
        seq.placeholders[g.placeholder].pos != g.placeholder_pos)
      throw ValidationError("candidate group does not match its placeholder");
    if (g.candidates.empty() || g.positive_index >= g.candidates.size())
      throw ValidationError("candidate group has no positive");
  }
  const bool ranking = ranking_weight > 0.0;
  const std::span<const CandidateGroup> attached =
      ranking ? std::span<const CandidateGroup>(groups) : std::span<const CandidateGroup>();

  const ad::Var x = tape_features(tape, v, seq, attached);
  Matrix mask = sequence_mask(seq, cfg);
  if (ranking) mask = expand_mask(mask, attached);
  std::vector<std::int64_t> pos = token_positions(seq);
  std::vector<Timestamp> t = token_times(seq);
  for (const auto& g : attached) {
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      pos.push_back(static_cast<std::int64_t>(g.placeholder_pos));
      t.push_back(seq.placeholders[g.placeholder].timestamp);
    }
  }
  const ad::Var h = tape_stack(tape, v, x, mask, pos, t, cfg);

  std::vector<std::size_t> rows, phs;
  for (const auto& g : groups) {
    rows.push_back(g.placeholder_pos);
    phs.push_back(g.placeholder);
  }
  const ad::Var r = tape_context(tape, v, seq, phs);
  const ad::Var o = tape_dsfnet(tape, v, tape.select_rows(h, rows), r, cfg);

  std::vector<ad::Var> terms;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    const auto& g = groups[j];
    std::vector<std::size_t> items(g.candidates.begin(), g.candidates.end());
    const ad::Var e = gather_rows(tape, v.item_emb, items, "item");
    const ad::Var z = tape.matmul_nt(tape.select_rows(o, {j}), e);
    terms.push_back(tape.infonce(z, g.positive_index));
  }
  if (ranking) {
    const std::size_t n = seq.size();
    std::vector<std::size_t> cand_rows, ctx_rows;
    for (std::size_t j = 0; j < groups.size(); ++j) {
      for (std::size_t i = 0; i < groups[j].candidates.size(); ++i) {
        cand_rows.push_back(n + cand_rows.size());
        ctx_rows.push_back(j);
      }
    }
    const ad::Var oc = tape_dsfnet(tape, v, tape.select_rows(h, cand_rows),
                                   tape.select_rows(r, ctx_rows), cfg);
    const ad::Var z = tape.affine(tape.silu(tape.affine(oc, v.head_w1, v.head_b1)), v.head_w2,
                                  v.head_b2);
    std::size_t row = 0;
    for (const auto& g : groups) {
      std::vector<std::size_t> idx;
      std::vector<double> labels;
      for (std::size_t i = 0; i < g.candidates.size(); ++i) {
        idx.push_back(row++);
        labels.push_back(i == g.positive_index ? 1.0 : 0.0);
      }
      terms.push_back(
          tape.scale(tape.bce(tape.select_rows(z, std::move(idx)), std::move(labels)), ranking_weight));
    }
  }
  return tape.sum_scalars(terms);
}

namespace {

std::size_t count_placeholders(std::span<const TrainExample> batch) {
  std::size_t n = 0;
  for (const auto& ex : batch) n += ex.seq.placeholders.size();
  return n;
}

void add_params(ModelParams& dst, const ModelParams& src) {
  auto d = dst.tensors();
  const auto s = src.tensors();
  for (std::size_t i = 0; i < d.size(); ++i) add_inplace(*d[i].second, *s[i].second);
}

}  // namespace

GradientResult compute_gradients(const ModelParams& params, std::span<const TrainExample> batch,
                                 const ModelConfig& cfg, double ranking_weight,
                                 std::size_t workers, double scale) {
  GradientResult res;
  res.grads = params.zeros_like();
  res.placeholders = count_placeholders(batch);
  if (res.placeholders == 0) return res;
  const double seed = scale / static_cast<double>(res.placeholders);

  std::vector<std::optional<ModelParams>> per(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    if (batch[i].groups.empty()) return;
    ModelParams g = params.zeros_like();
    ad::Tape tape;
    const ParamVars v = bind_params(tape, params, &g, cfg);
    const ad::Var loss = record_example_loss(tape, v, batch[i], cfg, ranking_weight);
    losses[i] = tape.value(loss)(0, 0);
    tape.backward(loss, seed);
    per[i] = std::move(g);
  });
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += losses[i];
    if (per[i]) add_params(res.grads, *per[i]);
  }
  res.loss = scale * total / static_cast<double>(res.placeholders);
  for (const auto& [name, m] : res.grads.tensors())
    if (!all_finite(*m)) throw NumericError("non-finite gradient in parameter " + name);
  return res;
}

double batch_loss(const ModelParams& params, std::span<const TrainExample> batch,
                  const ModelConfig& cfg, double ranking_weight) {
  const std::size_t n = count_placeholders(batch);
  if (n == 0) return 0.0;
  double total = 0.0;
  for (const auto& ex : batch) {
    ad::Tape tape;
    const ParamVars v = bind_params(tape, params, nullptr, cfg);
    total += tape.value(record_example_loss(tape, v, ex, cfg, ranking_weight))(0, 0);
  }
  return total / static_cast<double>(n);
}

Adam::Adam(const ModelParams& like, double beta1, double beta2, double eps)
    : m_(like.zeros_like()), v_(like.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ModelParams& params, const ModelParams& grads, double lr,
                std::span<const std::string> frozen) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  if (p.size() != g.size() || p.size() != m.size())
    throw ValidationError("adam: parameter sets differ in structure");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (std::find(frozen.begin(), frozen.end(), p[i].first) != frozen.end()) continue;
    auto pf = p[i].second->flat();
    const auto gf = g[i].second->flat();
    auto mf = m[i].second->flat();
    auto vf = v[i].second->flat();
    if (pf.size() != gf.size()) throw ValidationError("adam: gradient shape differs for " + p[i].first);
    for (std::size_t k = 0; k < pf.size(); ++k) {
      mf[k] = beta1_ * mf[k] + (1.0 - beta1_) * gf[k];
      vf[k] = beta2_ * vf[k] + (1.0 - beta2_) * gf[k] * gf[k];
      pf[k] -= lr * (mf[k] / c1) / (std::sqrt(vf[k] / c2) + eps_);
    }
  }
}

void Adam::restore(ModelParams m, ModelParams v, std::uint64_t t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

std::vector<std::string> relative_bias_tensors(const ModelParams& p) {
  std::vector<std::string> out;
  for (const auto& [name, m] : p.tensors())
    if (name.find(".rab_") != std::string::npos) out.push_back(name);
  return out;
}

bool placeholder_active(const Placeholder& ph, const TrainConfig& tc, std::size_t epoch) {
  if (!ph.delta || !ph.target) return false;
  if (tc.finetune_search_epochs == 0) return true;
  return epoch < tc.epochs ? !ph.search : ph.search;
}

TrainExample build_example(std::uint32_t user, std::span<const Interaction> train,
                           const ModelParams& params, const ModelConfig& cfg,
                           const TrainConfig& tc, const QueryPool& pool,
                           const NegativeSampler& sampler, std::size_t epoch) {
  TrainExample ex;
  Rng seq_rng = make_rng(tc.seed, "train_sequence", epoch, user);
  ex.seq = assemble_sequence(train, tc.sequence_options(cfg), pool, seq_rng);
  ex.seq.user = user;
  Matrix o;
  const bool hard = sampler.config().strategy == Strategy::kHns;
  if (hard) o = encode_placeholders(ex.seq, params, cfg);

  Rng rng = make_rng(tc.seed, "train_candidates", epoch, user);
  for (std::size_t j = 0; j < ex.seq.placeholders.size(); ++j) {
    const auto& ph = ex.seq.placeholders[j];
    if (!placeholder_active(ph, tc, epoch)) continue;
    const ItemId positive = *ph.target;
    const std::size_t c = std::min(sampler.config().c, sampler.admissible(ph.timestamp, positive).size());
    std::function<double(ItemId)> score;
    if (hard) {
      score = [&, j](ItemId item) {
        return kernels::dot(o.row(j), params.item_emb.row(item));
      };
    }
    CandidateGroup g;
    g.placeholder = j;
    g.placeholder_pos = ph.pos;
    g.draw_time = ph.timestamp;
    g.candidates = sampler.draw(ph.timestamp, positive, c, rng, score);
    g.positive_index = static_cast<std::size_t>(uniform_index(rng, c + 1));
    g.candidates.insert(g.candidates.begin() + static_cast<std::ptrdiff_t>(g.positive_index), positive);
    ex.groups.push_back(std::move(g));
  }
  return ex;
}

NamedTensors pack_checkpoint(const ModelParams& params, const ModelConfig& cfg, const Adam* adam,
                             std::size_t epochs_done) {
  NamedTensors out;
  auto scalar = [&](const std::string& name, double v) { out.emplace_back(name, Matrix(1, 1, v)); };
  scalar("config.d", static_cast<double>(cfg.d));
  scalar("config.layers", static_cast<double>(cfg.layers));
  scalar("config.n_items", static_cast<double>(cfg.n_items));
  scalar("config.n_users", static_cast<double>(cfg.n_users));
  scalar("config.n_scenarios", static_cast<double>(cfg.n_scenarios));
  scalar("config.n_feedback", static_cast<double>(cfg.n_feedback));
  scalar("config.dsf_scenarios", static_cast<double>(cfg.dsf_scenarios));
  scalar("config.ctx_dim", static_cast<double>(cfg.ctx_dim));
  scalar("config.gate_hidden", static_cast<double>(cfg.gate_hidden));
  scalar("config.max_dist", static_cast<double>(cfg.max_dist));
  scalar("config.ln_eps", cfg.ln_eps);
  scalar("config.relative_bias", cfg.relative_bias ? 1.0 : 0.0);
  scalar("config.dsfnet", cfg.dsfnet ? 1.0 : 0.0);
  scalar("config.session_mask", cfg.session_mask ? 1.0 : 0.0);
  scalar("meta.epochs_done", static_cast<double>(epochs_done));
  scalar("meta.step", adam ? static_cast<double>(adam->steps()) : 0.0);
  for (const auto& [name, m] : params.tensors()) out.emplace_back(name, *m);
  if (adam) {
    for (const auto& [name, m] : adam->m().tensors()) out.emplace_back("adam.m." + name, *m);
    for (const auto& [name, m] : adam->v().tensors()) out.emplace_back("adam.v." + name, *m);
  }
  return out;
}

ModelConfig checkpoint_config(const NamedTensors& ck) {
  auto get = [&](const char* name) { return find_tensor(ck, name)(0, 0); };
  auto sz = [&](const char* name) { return static_cast<std::size_t>(get(name)); };
  ModelConfig c;
  c.d = sz("config.d");
  c.layers = sz("config.layers");
  c.n_items = sz("config.n_items");
  c.n_users = sz("config.n_users");
  c.n_scenarios = sz("config.n_scenarios");
  c.n_feedback = sz("config.n_feedback");
  c.dsf_scenarios = sz("config.dsf_scenarios");
  c.ctx_dim = sz("config.ctx_dim");
  c.gate_hidden = sz("config.gate_hidden");
  c.max_dist = static_cast<int>(get("config.max_dist"));
  c.ln_eps = get("config.ln_eps");
  c.relative_bias = get("config.relative_bias") != 0.0;
  c.dsfnet = get("config.dsfnet") != 0.0;
  c.session_mask = get("config.session_mask") != 0.0;
  c.validate();
  return c;
}

namespace {

ModelParams load_named(const NamedTensors& ck, const ModelConfig& cfg, const std::string& prefix) {
  ModelParams p = init_params(cfg).zeros_like();
  for (auto& [name, m] : p.tensors()) {
    const Matrix& src = find_tensor(ck, prefix + name);
    if (!src.same_shape(*m))
      throw ValidationError("checkpoint tensor " + prefix + name + " has shape " +
                            std::to_string(src.rows()) + "x" + std::to_string(src.cols()) +
                            ", expected " + std::to_string(m->rows()) + "x" +
                            std::to_string(m->cols()));
    *m = src;
  }
  return p;
}

}  // namespace

ModelParams checkpoint_params(const NamedTensors& ck, const ModelConfig& cfg) {
  return load_named(ck, cfg, "");
}

QueryPool corpus_query_pool(const Corpus& corpus, std::uint64_t seed, std::size_t dim) {
  return QueryPool(build_query_pool(corpus.catalog, collect_user_queries(corpus), seed, dim));
}

TrainResult train_loop(const Corpus& corpus, ModelParams params, const ModelConfig& cfg,
                       const TrainConfig& tc, const TrainOptions& options) {
  tc.validate();
  cfg.validate();
  check_params(params, cfg);
  if (!cfg.relative_bias)
    for (auto& q : params.qdb) {
      q.rab_pos.fill(0.0);
      q.rab_time.fill(0.0);
    }

  Adam adam(params, tc.beta1, tc.beta2, tc.adam_eps);
  std::size_t start = 0;
  if (options.resume) {
    const auto& ck = *options.resume;
    params = checkpoint_params(ck, cfg);
    if (has_tensor(ck, "adam.m.emb.item"))
      adam.restore(load_named(ck, cfg, "adam.m."), load_named(ck, cfg, "adam.v."),
                   static_cast<std::uint64_t>(find_tensor(ck, "meta.step")(0, 0)));
    start = static_cast<std::size_t>(find_tensor(ck, "meta.epochs_done")(0, 0));
  }
  const std::vector<std::string> frozen =
      cfg.relative_bias ? std::vector<std::string>{} : relative_bias_tensors(params);

  const auto splits = leave_one_out(corpus);
  const LifecycleIndex index(corpus.catalog);
  const QueryPool pool = corpus_query_pool(corpus, tc.seed, cfg.d);
  const NegativeSampler sampler(corpus.catalog, index, tc.sampler);
  const SequenceOptions eval_opts = [&] {
    SequenceOptions o = tc.sequence_options(cfg);
    o.ranking_mode = false;
    return o;
  }();
  const auto valid_cases = eval_cases(splits, EvalSplit::kValid);

  std::vector<std::uint32_t> users;
  for (std::uint32_t u = 0; u < splits.size(); ++u)
    if (!splits[u].train.empty()) users.push_back(u);

  TrainResult res;
  if (options.log && start == 0) *options.log << kMetricHeader << "\n";
  auto emit = [&](const std::string& row) {
    res.log_rows.push_back(row);
    if (options.log) *options.log << row << "\n" << std::flush;
  };

  for (std::size_t epoch = start; epoch < tc.total_epochs(); ++epoch) {
    std::vector<std::uint32_t> order = users;
    Rng shuffle = make_rng(tc.seed, "train_shuffle", epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(shuffle, i)]);

    double loss_sum = 0.0;
    std::size_t placeholder_sum = 0;
    for (std::size_t b0 = 0, step = 0; b0 < order.size(); b0 += tc.batch_size, ++step) {
      const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
      std::vector<TrainExample> batch(b1 - b0);
      parallel_for(batch.size(), tc.workers, [&](std::size_t i) {
        const auto u = order[b0 + i];
        batch[i] = build_example(u, splits[u].train, params, cfg, tc, pool, sampler, epoch);
      });
      const GradientResult g = compute_gradients(params, batch, cfg, tc.ranking_weight, tc.workers);
      if (!std::isfinite(g.loss))
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step));
      loss_sum += g.loss * static_cast<double>(g.placeholders);
      placeholder_sum += g.placeholders;
      adam.step(params, g.grads, tc.lr, frozen);
    }
    const double epoch_loss = placeholder_sum ? loss_sum / static_cast<double>(placeholder_sum) : 0.0;
    res.epoch_loss.push_back(epoch_loss);
    emit(std::to_string(epoch) + ",train," + text::format_double(epoch_loss) + ",,,,,");

    if (tc.eval_every && (epoch + 1) % tc.eval_every == 0 && !valid_cases.empty()) {
      const CaseScorer scorer = model_scorer(params, cfg, eval_opts, pool, tc.seed);
      const MetricTable m =
          tc.eval_aligned ? evaluate_aligned(scorer, valid_cases, index, tc.workers)
                          : evaluate_sampled(scorer, valid_cases, corpus, tc.eval_negatives,
                                             tc.seed, tc.workers);
      emit(format_metric_row(epoch, "valid", m));
    }
    res.checkpoint = pack_checkpoint(params, cfg, &adam, epoch + 1);
    if (options.on_epoch) options.on_epoch(epoch, res.checkpoint);
  }
  if (res.checkpoint.empty()) res.checkpoint = pack_checkpoint(params, cfg, &adam, start);
  res.params = std::move(params);
  return res;
}

}  // namespace qdrec
