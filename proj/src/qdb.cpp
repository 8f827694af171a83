// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/qdb.hpp"

#include <algorithm>
#include <cmath>

#include "qdrec/error.hpp"
#include "qdrec/kernels.hpp"

namespace qdrec {

QdbProjections qdb_project(const Matrix& x, const QdbLayerParams& p) {
  const std::size_t d = x.cols();
  if (p.w1.rows() != d || p.w1.cols() != 4 * d)
    throw ValidationError("qdb: mlp1 weight shape does not match input width");
  const Matrix u = silu(affine(x, p.w1, p.b1));
  return {slice_cols(u, 0, d), slice_cols(u, d, 2 * d), slice_cols(u, 2 * d, 3 * d),
          slice_cols(u, 3 * d, 4 * d)};
}

double relative_bias_at(std::int64_t dpos, Timestamp dt, const QdbLayerParams& p,
                        const ModelConfig& cfg) {
  if (!cfg.relative_bias) return 0.0;
  const std::int64_t m = cfg.max_dist;
  const auto idx = static_cast<std::size_t>(std::clamp<std::int64_t>(dpos, -m, m) + m);
  return p.rab_pos(0, idx) - p.rab_time(0, 0) * static_cast<double>(dt < 0 ? -dt : dt);
}

Matrix relative_bias(std::span<const std::int64_t> row_pos, std::span<const Timestamp> row_t,
                     std::span<const std::int64_t> col_pos, std::span<const Timestamp> col_t,
                     const QdbLayerParams& p, const ModelConfig& cfg) {
  if (row_pos.size() != row_t.size() || col_pos.size() != col_t.size())
    throw ValidationError("relative_bias: position and time vectors differ in length");
  Matrix b(row_pos.size(), col_pos.size());
  if (!cfg.relative_bias) return b;
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t k = 0; k < b.cols(); ++k)
      b(r, k) = relative_bias_at(row_pos[r] - col_pos[k], row_t[r] - col_t[k], p, cfg);
  return b;
}

RowCoords sequence_coords(const EventSequence& seq) {
  return {token_positions(seq), token_times(seq)};
}

Matrix qdb_gated_scores(const Matrix& q, const Matrix& k, const Matrix& mask, const RowCoords& rows,
                    const RowCoords& cols, const QdbLayerParams& p, const ModelConfig& cfg) {
  Matrix s = matmul_nt(q, k);
  if (!mask.same_shape(s)) throw ValidationError("qdb: mask shape does not match scores");
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < s.cols(); ++c) {
      double& v = s(r, c);
      if (mask(r, c) == 0.0) {
        v = 0.0;
        continue;
      }
      v = mask(r, c) *
          silu(v + relative_bias_at(rows.pos[r] - cols.pos[c], rows.t[r] - cols.t[c], p, cfg));
    }
  }
  return s;
}

Matrix qdb_output(const Matrix& attended, const Matrix& gate, const QdbLayerParams& p,
                  const ModelConfig& cfg) {
  return affine(hadamard(layer_norm_rows(attended, cfg.ln_eps), gate), p.w2, p.b2);
}

namespace {

void check_coords(const RowCoords& c, std::size_t n) {
  if (c.pos.size() != n || c.t.size() != n)
    throw ValidationError("qdb: coordinates do not cover every row");
}

Matrix layer_from_projections(const QdbProjections& pr, const Matrix& mask,
                              const RowCoords& coords, const QdbLayerParams& p,
                              const ModelConfig& cfg) {
  const Matrix a = qdb_gated_scores(pr.q, pr.k, mask, coords, coords, p, cfg);
  return qdb_output(matmul(a, pr.v), pr.w, p, cfg);
}

void check_finite(const Matrix& y, std::size_t layer) {
  if (!all_finite(y))
    throw NumericError("qdb layer " + std::to_string(layer) + ": non-finite output");
}

}  // namespace

Matrix qdb_layer_reference(const Matrix& x, const Matrix& mask, const RowCoords& coords,
                           const QdbLayerParams& p, const ModelConfig& cfg) {
  check_coords(coords, x.rows());
  return layer_from_projections(qdb_project(x, p), mask, coords, p, cfg);
}

StreamSplit split_streams(const EventSequence& seq) {
  StreamSplit s;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& t = seq.tokens[i];
    (t.kind == TokenKind::kQ && !t.q_valid ? s.idx2 : s.idx1).push_back(i);
  }
  return s;
}

namespace {

void check_partition(const StreamSplit& split, std::size_t n) {
  if (split.size() != n) throw ValidationError("stream split does not cover the sequence");
  std::vector<char> seen(n, 0);
  for (const auto* list : {&split.idx1, &split.idx2}) {
    for (std::size_t i = 0; i < list->size(); ++i) {
      const auto v = (*list)[i];
      if (v >= n || seen[v]) throw ValidationError("stream split index maps are not a partition");
      if (i > 0 && (*list)[i - 1] >= v)
        throw ValidationError("stream split index maps must be ascending");
      seen[v] = 1;
    }
  }
}

Matrix sub_mask(const Matrix& m, std::span<const std::size_t> rows,
                std::span<const std::size_t> cols) {
  Matrix out(rows.size(), cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = m(rows[r], cols[c]);
  return out;
}

RowCoords sub_coords(const RowCoords& c, std::span<const std::size_t> idx) {
  RowCoords out;
  for (auto i : idx) {
    out.pos.push_back(c.pos[i]);
    out.t.push_back(c.t[i]);
  }
  return out;
}

}  // namespace

SplitMasks split_masks(const Matrix& mask, const StreamSplit& split) {
  if (mask.rows() != mask.cols()) throw ValidationError("split_masks: mask must be square");
  check_partition(split, mask.rows());
  for (auto r : split.idx1)
    for (auto c : split.idx2)
      if (mask(r, c) != 0.0)
        throw ValidationError("split_masks: token " + std::to_string(r) + " attends to stream-2 token " +
                              std::to_string(c));
  return {sub_mask(mask, split.idx1, split.idx1), sub_mask(mask, split.idx2, split.idx1),
          sub_mask(mask, split.idx2, split.idx2)};
}

SplitOutput qdb_layer_split(const Matrix& x1, const Matrix& x2, const SplitMasks& masks,
                            const RowCoords& c1, const RowCoords& c2, const QdbLayerParams& p,
                            const ModelConfig& cfg) {
  const std::size_t n1 = x1.rows(), n2 = x2.rows();
  check_coords(c1, n1);
  check_coords(c2, n2);
  if (masks.m11.rows() != n1 || masks.m11.cols() != n1 || masks.m21.rows() != n2 ||
      masks.m21.cols() != n1 || masks.m22.rows() != n2 || masks.m22.cols() != n2)
    throw ValidationError("qdb_layer_split: mask shapes do not match the streams");
  for (std::size_t r = 0; r < n2; ++r)
    for (std::size_t c = 0; c < n2; ++c)
      if (r != c && masks.m22(r, c) != 0.0)
        throw ValidationError("qdb_layer_split: stream-2 self mask must be diagonal");

  SplitOutput out;
  const QdbProjections p1 = qdb_project(x1, p);
  out.y1 = layer_from_projections(p1, masks.m11, c1, p, cfg);
  if (n2 == 0) {
    out.y2 = Matrix(0, x1.cols());
    return out;
  }
  const QdbProjections p2 = qdb_project(x2, p);
  Matrix o2 = matmul(qdb_gated_scores(p2.q, p1.k, masks.m21, c2, c1, p, cfg), p1.v);
  for (std::size_t j = 0; j < n2; ++j) {
    if (masks.m22(j, j) == 0.0) continue;
    const double a = masks.m22(j, j) *
                     silu(kernels::dot(p2.q.row(j), p2.k.row(j)) + relative_bias_at(0, 0, p, cfg));
    kernels::axpy(a, p2.v.row(j), o2.row(j));
  }
  out.y2 = qdb_output(o2, p2.w, p, cfg);
  return out;
}

Matrix merge_streams(const Matrix& y1, const Matrix& y2, const StreamSplit& split) {
  if (y1.rows() != split.idx1.size() || y2.rows() != split.idx2.size() ||
      (y2.rows() && y1.rows() && y1.cols() != y2.cols()))
    throw ValidationError("merge_streams: shapes do not match the split");
  const std::size_t cols = y1.rows() ? y1.cols() : y2.cols();
  Matrix out(split.size(), cols);
  for (std::size_t i = 0; i < split.idx1.size(); ++i)
    std::copy(y1.row(i).begin(), y1.row(i).end(), out.row(split.idx1[i]).begin());
  for (std::size_t i = 0; i < split.idx2.size(); ++i)
    std::copy(y2.row(i).begin(), y2.row(i).end(), out.row(split.idx2[i]).begin());
  return out;
}

Matrix stack_forward(const Matrix& x, const Matrix& mask, const RowCoords& coords,
                     const ModelParams& p, const ModelConfig& cfg, KVCache* cache) {
  check_coords(coords, x.rows());
  if (cache) *cache = KVCache{};
  Matrix h = x;
  for (std::size_t l = 0; l < p.qdb.size(); ++l) {
    QdbProjections pr = qdb_project(h, p.qdb[l]);
    Matrix y = layer_from_projections(pr, mask, coords, p.qdb[l], cfg);
    check_finite(y, l);
    if (cache) {
      cache->k.push_back(std::move(pr.k));
      cache->v.push_back(std::move(pr.v));
    }
    add_inplace(h, y);
  }
  return h;
}

Matrix stack_forward_split(const Matrix& x, const Matrix& mask, const RowCoords& coords,
                           const StreamSplit& split, const ModelParams& p,
                           const ModelConfig& cfg) {
  check_coords(coords, x.rows());
  const SplitMasks masks = split_masks(mask, split);
  const RowCoords c1 = sub_coords(coords, split.idx1), c2 = sub_coords(coords, split.idx2);
  Matrix x1 = select_rows(x, split.idx1), x2 = select_rows(x, split.idx2);
  for (std::size_t l = 0; l < p.qdb.size(); ++l) {
    SplitOutput y = qdb_layer_split(x1, x2, masks, c1, c2, p.qdb[l], cfg);
    check_finite(y.y1, l);
    check_finite(y.y2, l);
    add_inplace(x1, y.y1);
    add_inplace(x2, y.y2);
  }
  return merge_streams(x1, x2, split);
}

}  // namespace qdrec
