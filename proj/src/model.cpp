// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/model.hpp"

#include <cmath>
#include <random>

#include "qdrec/config.hpp"
#include "qdrec/error.hpp"
#include "qdrec/rng.hpp"

namespace qdrec {

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw ValidationError("model config: " + why); };
  if (d == 0) fail("d must be positive");
  if (layers == 0) fail("layers must be at least 1");
  if (n_items == 0) fail("n_items must be positive");
  if (n_users == 0) fail("n_users must be positive");
  if (n_scenarios == 0) fail("n_scenarios must be positive");
  if (n_feedback == 0) fail("n_feedback must be positive");
  if (dsf_scenarios == 0) fail("dsf_scenarios must be positive");
  if (ctx_dim == 0 || gate_hidden == 0) fail("ctx_dim and gate_hidden must be positive");
  if (max_dist < 0) fail("max_dist must be nonnegative");
  if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
}

ModelConfig ModelConfig::from_config(const KvConfig& c) {
  ModelConfig m;
  const char* s = "model";
  auto sz = [&](const char* key, std::size_t v) {
    const auto x = c.get(s, key, static_cast<std::int64_t>(v));
    if (x < 0) throw ValidationError(std::string("model config: negative ") + key);
    return static_cast<std::size_t>(x);
  };
  m.d = sz("d", m.d);
  m.layers = sz("layers", m.layers);
  m.dsf_scenarios = sz("dsf_scenarios", m.dsf_scenarios);
  m.ctx_dim = sz("ctx_dim", m.ctx_dim);
  m.gate_hidden = sz("gate_hidden", m.gate_hidden);
  m.max_dist = c.get(s, "max_dist", m.max_dist);
  m.ln_eps = c.get(s, "ln_eps", m.ln_eps);
  m.seed = static_cast<std::uint64_t>(c.get(s, "seed", static_cast<std::int64_t>(m.seed)));
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> dsf_layer_dims(std::size_t d) {
  return {{d, 2 * d}, {2 * d, d}, {d, d}};
}

namespace {

template <typename P, typename F>
void visit(P& p, F&& f) {
  f("emb.item", p.item_emb);
  f("emb.scenario", p.scenario_emb);
  f("emb.feedback", p.feedback_emb);
  f("emb.type", p.type_emb);
  f("emb.universal", p.universal);
  f("emb.query_proj", p.query_proj);
  f("ctx.page", p.page_emb);
  f("ctx.task", p.task_emb);
  f("ctx.user", p.user_emb);
  for (std::size_t l = 0; l < p.qdb.size(); ++l) {
    auto& q = p.qdb[l];
    const std::string pre = "qdb." + std::to_string(l) + ".";
    f(pre + "mlp1.w", q.w1);
    f(pre + "mlp1.b", q.b1);
    f(pre + "mlp2.w", q.w2);
    f(pre + "mlp2.b", q.b2);
    f(pre + "rab_pos", q.rab_pos);
    f(pre + "rab_time", q.rab_time);
  }
  f("dsf.filter.w", p.dsf.filter_w);
  f("dsf.filter.b", p.dsf.filter_b);
  for (std::size_t l = 0; l < p.dsf.layers.size(); ++l) {
    for (std::size_t g = 0; g < p.dsf.layers[l].size(); ++g) {
      auto& s = p.dsf.layers[l][g];
      const std::string pre = "dsf." + std::to_string(l) + "." + std::to_string(g) + ".";
      f(pre + "w", s.w);
      f(pre + "b", s.b);
      f(pre + "gate.w1", s.gate_w1);
      f(pre + "gate.b1", s.gate_b1);
      f(pre + "gate.w2", s.gate_w2);
      f(pre + "gate.b2", s.gate_b2);
    }
  }
  f("head.w1", p.head_w1);
  f("head.b1", p.head_b1);
  f("head.w2", p.head_w2);
  f("head.b2", p.head_b2);
}

Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = normal(rng);
  return m;
}

Matrix weight(Rng& rng, std::size_t in, std::size_t out) {
  return normal_matrix(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in)));
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> ModelParams::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  visit(*this, [&](const std::string& n, Matrix& m) { out.emplace_back(n, &m); });
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  visit(*this, [&](const std::string& n, const Matrix& m) { out.emplace_back(n, &m); });
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& [name, m] : z.tensors()) m->fill(0.0);
  return z;
}

ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d, r = cfg.context_dim();
  Rng rng = make_rng(cfg.seed, "init");
  ModelParams p;
  p.item_emb = normal_matrix(rng, cfg.n_items, d, 0.1);
  p.scenario_emb = normal_matrix(rng, cfg.n_scenarios, d, 0.1);
  p.feedback_emb = normal_matrix(rng, cfg.n_feedback, d, 0.1);
  p.type_emb = normal_matrix(rng, 4, d, 0.1);
  p.universal = normal_matrix(rng, 1, d, 0.1);
  p.query_proj = weight(rng, d, d);
  p.page_emb = normal_matrix(rng, 2, cfg.ctx_dim, 0.1);
  p.task_emb = normal_matrix(rng, 2, cfg.ctx_dim, 0.1);
  p.user_emb = normal_matrix(rng, cfg.n_users, cfg.ctx_dim, 0.1);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    QdbLayerParams q;
    q.w1 = weight(rng, d, 4 * d);
    q.b1 = Matrix(1, 4 * d);
    q.w2 = weight(rng, d, d);
    scale_inplace(q.w2, 0.5);
    q.b2 = Matrix(1, d);
    q.rab_pos = Matrix(1, static_cast<std::size_t>(2 * cfg.max_dist + 1));
    q.rab_time = Matrix(1, 1, cfg.relative_bias ? 1e-3 : 0.0);
    p.qdb.push_back(std::move(q));
  }
  p.dsf.filter_w = weight(rng, d + r, d);
  p.dsf.filter_b = Matrix(1, d);
  for (auto [in, out] : dsf_layer_dims(d)) {
    std::vector<DsfScenarioParams> layer;
    for (std::size_t g = 0; g < cfg.dsf_scenarios; ++g) {
      DsfScenarioParams s;
      s.w = weight(rng, in, out);
      s.b = Matrix(1, out);
      s.gate_w1 = weight(rng, r, cfg.gate_hidden);
      s.gate_b1 = Matrix(1, cfg.gate_hidden);
      s.gate_w2 = normal_matrix(rng, cfg.gate_hidden, 1, 0.01);
      s.gate_b2 = Matrix(1, 1);
      layer.push_back(std::move(s));
    }
    p.dsf.layers.push_back(std::move(layer));
  }
  p.head_w1 = weight(rng, d, d);
  p.head_b1 = Matrix(1, d);
  p.head_w2 = weight(rng, d, 1);
  p.head_b2 = Matrix(1, 1);
  return p;
}

void check_params(const ModelParams& p, const ModelConfig& cfg) {
  const ModelParams ref = init_params(cfg);
  const auto a = p.tensors();
  const auto b = ref.tensors();
  if (a.size() != b.size())
    throw ValidationError("parameter set has " + std::to_string(a.size()) + " tensors, expected " +
                          std::to_string(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].second->same_shape(*b[i].second))
      throw ValidationError("parameter " + a[i].first + " has shape " +
                            std::to_string(a[i].second->rows()) + "x" +
                            std::to_string(a[i].second->cols()) + ", expected " +
                            std::to_string(b[i].second->rows()) + "x" +
                            std::to_string(b[i].second->cols()));
  }
}

namespace {

void add_row(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void check_row(const Matrix& table, std::size_t r, const char* what) {
  if (r >= table.rows())
    throw LookupError(std::string(what) + " id " + std::to_string(r) + " out of range (" +
                      std::to_string(table.rows()) + ")");
}

Matrix projected_query(std::span<const double> e, const ModelParams& p) {
  if (e.size() != p.query_proj.rows())
    throw ValidationError("query embedding has dimension " + std::to_string(e.size()) +
                          ", expected " + std::to_string(p.query_proj.rows()));
  Matrix row(1, e.size(), std::vector<double>(e.begin(), e.end()));
  return matmul(row, p.query_proj);
}

}  // namespace

Matrix token_features(const EventSequence& seq, const ModelParams& p) {
  const std::size_t d = p.type_emb.cols();
  Matrix x(seq.size(), d);
  for (std::size_t r = 0; r < seq.size(); ++r) {
    const auto& t = seq.tokens[r];
    auto out = x.row(r);
    add_row(out, p.type_emb.row(static_cast<std::size_t>(t.kind)));
    const auto id = static_cast<std::size_t>(t.vocab_id);
    switch (t.kind) {
      case TokenKind::kS:
        check_row(p.scenario_emb, id, "scenario");
        add_row(out, p.scenario_emb.row(id));
        break;
      case TokenKind::kI:
        check_row(p.item_emb, id, "item");
        add_row(out, p.item_emb.row(id));
        break;
      case TokenKind::kF:
        check_row(p.feedback_emb, id, "feedback");
        add_row(out, p.feedback_emb.row(id));
        break;
      case TokenKind::kQ:
        if (t.q.kind == PayloadKind::kSearchQuery)
          add_row(out, projected_query(t.q.embedding, p).row(0));
        else
          add_row(out, p.universal.row(0));
        break;
    }
  }
  return x;
}

Matrix candidate_feature(const Placeholder& ph, ItemId item, const ModelParams& p) {
  check_row(p.item_emb, item, "item");
  Matrix x(1, p.type_emb.cols());
  add_row(x.row(0), p.type_emb.row(static_cast<std::size_t>(TokenKind::kQ)));
  add_row(x.row(0), p.item_emb.row(item));
  if (ph.search && !ph.query_embedding.empty())
    add_row(x.row(0), projected_query(ph.query_embedding, p).row(0));
  return x;
}

Matrix scenario_context(const Placeholder& ph, std::uint32_t user, const ModelParams& p) {
  const auto s = static_cast<std::size_t>(ph.scenario);
  check_row(p.scenario_emb, s, "scenario");
  check_row(p.user_emb, user, "user");
  const std::size_t d = p.scenario_emb.cols(), c = p.page_emb.cols();
  Matrix r(1, d + 3 * c);
  auto out = r.row(0);
  std::size_t o = 0;
  for (double v : p.scenario_emb.row(s)) out[o++] = v;
  for (double v : p.page_emb.row(ph.page ? 1 : 0)) out[o++] = v;
  for (double v : p.task_emb.row(ph.search ? 1 : 0)) out[o++] = v;
  for (double v : p.user_emb.row(user)) out[o++] = v;
  return r;
}

std::vector<std::int64_t> token_positions(const EventSequence& seq) {
  std::vector<std::int64_t> pos(seq.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<std::int64_t>(i);
  return pos;
}

std::vector<Timestamp> token_times(const EventSequence& seq) {
  std::vector<Timestamp> t(seq.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = seq.tokens[i].timestamp;
  return t;
}

}  // namespace qdrec
