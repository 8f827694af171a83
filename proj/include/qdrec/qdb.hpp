// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Query-driven block: gated pointwise-SiLU attention.
//
//   (W, Q, K, V) = split(SiLU(X W1 + b1))
//   A = M . SiLU(Q K^T + rab_pos[clip(r - k)] - slope |t_r - t_k|)
//   Y = (Norm(A V) . W) W2 + b2
//
// Norm is per-row layer normalization without affine terms. Stacks apply the
// residual X + Y after each layer.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qdrec/matrix.hpp"
#include "qdrec/model.hpp"

namespace qdrec {

struct QdbProjections {
  Matrix w, q, k, v;
};

QdbProjections qdb_project(const Matrix& x, const QdbLayerParams& p);

/// bias[r][k] = rab_pos[clip(pos_r - pos_k, -max_dist, max_dist) + max_dist]
///              - slope * |t_r - t_k|.
/// Zero when cfg.relative_bias is false.
Matrix relative_bias(std::span<const std::int64_t> row_pos, std::span<const Timestamp> row_t,
                     std::span<const std::int64_t> col_pos, std::span<const Timestamp> col_t,
                     const QdbLayerParams& p, const ModelConfig& cfg);

/// Single bias entry, same convention.
double relative_bias_at(std::int64_t dpos, Timestamp dt, const QdbLayerParams& p,
                        const ModelConfig& cfg);

/// Position and time of each row of a layer input.
struct RowCoords {
  std::vector<std::int64_t> pos;
  std::vector<Timestamp> t;
};

RowCoords sequence_coords(const EventSequence& seq);

/// M . SiLU(Q K^T + bias) for query rows at `rows` against keys at `cols`.
/// Entries with a zero mask are exactly zero.
Matrix qdb_gated_scores(const Matrix& q, const Matrix& k, const Matrix& mask,
                        const RowCoords& rows, const RowCoords& cols, const QdbLayerParams& p,
                        const ModelConfig& cfg);

/// (Norm(attended) . gate) W2 + b2.
Matrix qdb_output(const Matrix& attended, const Matrix& gate, const QdbLayerParams& p,
                  const ModelConfig& cfg);

/// One layer over all N rows (without the residual).
Matrix qdb_layer_reference(const Matrix& x, const Matrix& mask, const RowCoords& coords,
                           const QdbLayerParams& p, const ModelConfig& cfg);

/// X1 holds tokens usable as keys; X2 the Q tokens that are not (their mask
/// columns are zero off the diagonal). Both index lists are ascending.
struct StreamSplit {
  std::vector<std::size_t> idx1;
  std::vector<std::size_t> idx2;
  std::size_t size() const { return idx1.size() + idx2.size(); }
};

StreamSplit split_streams(const EventSequence& seq);

/// Sub-masks of the unified mask for a split.
struct SplitMasks {
  Matrix m11;  // |X1| x |X1|
  Matrix m21;  // |X2| x |X1|
  Matrix m22;  // |X2| x |X2|
};

/// Throws ValidationError when the split disagrees with the mask (a nonzero
/// X1 x X2 entry) or the index maps are not a partition of 0..N-1.
SplitMasks split_masks(const Matrix& mask, const StreamSplit& split);

struct SplitOutput {
  Matrix y1, y2;
};

/// Two-stream layer: Y1 from X1 alone; Y2 from X2 attending to X1 through
/// m21 and to itself through the diagonal m22. Throws ValidationError when
/// m22 has off-diagonal entries or the shapes are inconsistent.
SplitOutput qdb_layer_split(const Matrix& x1, const Matrix& x2, const SplitMasks& masks,
                            const RowCoords& c1, const RowCoords& c2, const QdbLayerParams& p,
                            const ModelConfig& cfg);

/// Scatters (y1, y2) back to unified positions.
Matrix merge_streams(const Matrix& y1, const Matrix& y2, const StreamSplit& split);

/// Per-layer key and value rows captured during a forward pass.
struct KVCache {
  std::vector<Matrix> k;
  std::vector<Matrix> v;
};

/// h residual layers with the unified reference layer. When `cache` is set it
/// receives every layer's K and V.
Matrix stack_forward(const Matrix& x, const Matrix& mask, const RowCoords& coords,
                     const ModelParams& p, const ModelConfig& cfg, KVCache* cache = nullptr);

/// Same stack through the two-stream layer.
Matrix stack_forward_split(const Matrix& x, const Matrix& mask, const RowCoords& coords,
                           const StreamSplit& split, const ModelParams& p,
                           const ModelConfig& cfg);

}  // namespace qdrec
