// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Model configuration, the full parameter set, and the input feature rows.
//
// Features are row vectors and layers compute Y = X * W + b. A token's
// feature is its type embedding plus its content embedding:
//   S -> scenario_emb[s]        I -> item_emb[i]        F -> feedback_emb[f]
//   Q -> query * query_proj (search payloads) or the universal vector.
// A candidate row is a Q-typed token whose content is item_emb[c], plus the
// projected query when its placeholder came from a search.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qdrec/matrix.hpp"
#include "qdrec/sequence.hpp"

namespace qdrec {

class KvConfig;

struct ModelConfig {
  std::size_t d = 32;
  std::size_t layers = 3;
  std::size_t n_items = 100;
  std::size_t n_users = 200;
  std::size_t n_scenarios = 4;
  std::size_t n_feedback = 3;
  std::size_t dsf_scenarios = 2;
  std::size_t ctx_dim = 8;
  std::size_t gate_hidden = 16;
  int max_dist = 64;
  double ln_eps = 1e-10;
  bool relative_bias = true;
  bool dsfnet = true;
  bool session_mask = true;
  std::uint64_t seed = 42;

  void validate() const;
  /// Reads the [model] section.
  static ModelConfig from_config(const KvConfig& cfg);
  /// Width of the scenario context R.
  std::size_t context_dim() const { return d + 3 * ctx_dim; }
};

struct QdbLayerParams {
  Matrix w1, b1;  // d x 4d, 1 x 4d
  Matrix w2, b2;  // d x d, 1 x d
  Matrix rab_pos;   // 1 x (2 max_dist + 1)
  Matrix rab_time;  // 1 x 1 slope
};

struct DsfScenarioParams {
  Matrix w, b;                  // in x out, 1 x out
  Matrix gate_w1, gate_b1;      // r x hidden, 1 x hidden
  Matrix gate_w2, gate_b2;      // hidden x 1, 1 x 1
};

struct DsfParams {
  Matrix filter_w, filter_b;  // (d + r) x d, 1 x d
  /// layers[l][g]
  std::vector<std::vector<DsfScenarioParams>> layers;
};

struct ModelParams {
  Matrix item_emb;      // n_items x d
  Matrix scenario_emb;  // n_scenarios x d
  Matrix feedback_emb;  // n_feedback x d
  Matrix type_emb;      // 4 x d, indexed by TokenKind
  Matrix universal;     // 1 x d
  Matrix query_proj;    // d x d
  Matrix page_emb;      // 2 x ctx
  Matrix task_emb;      // 2 x ctx
  Matrix user_emb;      // n_users x ctx
  std::vector<QdbLayerParams> qdb;
  DsfParams dsf;
  Matrix head_w1, head_b1, head_w2, head_b2;

  /// Every tensor with its canonical name, in a fixed order.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  /// Same shapes, all zeros.
  ModelParams zeros_like() const;
};

/// DSFNet layer widths: d -> 2d -> d -> d.
std::vector<std::pair<std::size_t, std::size_t>> dsf_layer_dims(std::size_t d);

/// Random initialization from cfg.seed; bias tables start at zero and the
/// time slope at a small positive value (zero when relative_bias is off).
ModelParams init_params(const ModelConfig& cfg);

/// Throws ValidationError when a shape disagrees with cfg.
void check_params(const ModelParams& p, const ModelConfig& cfg);

/// N x d feature rows of a sequence.
Matrix token_features(const EventSequence& seq, const ModelParams& p);

/// Feature row of candidate `item` standing in for placeholder `ph`.
Matrix candidate_feature(const Placeholder& ph, ItemId item, const ModelParams& p);

/// 1 x context_dim() scenario context for a placeholder.
Matrix scenario_context(const Placeholder& ph, std::uint32_t user, const ModelParams& p);

/// Token positions 0..N-1 and timestamps of a sequence.
std::vector<std::int64_t> token_positions(const EventSequence& seq);
std::vector<Timestamp> token_times(const EventSequence& seq);

}  // namespace qdrec
