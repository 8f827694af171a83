// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Losses, reverse-mode gradients of the full model, the Adam optimizer and
// the epoch loop.
//
// Each training example is one user's train-split sequence with candidate
// groups attached at its active placeholders. The retrieval term of a group
// is the softmax cross-entropy of the placeholder output's dot products with
// its candidates; the optional ranking term runs the candidates through the
// expanded sequence and the ranking head. A batch loss is the sum of active
// terms divided by the number of placeholders in the batch.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdrec/autograd.hpp"
#include "qdrec/checkpoint.hpp"
#include "qdrec/datagen.hpp"
#include "qdrec/model.hpp"
#include "qdrec/sampling.hpp"
#include "qdrec/sequence.hpp"

namespace qdrec {

class KvConfig;

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool no_S = false;
  bool no_search_queries = false;
  bool no_session_mask = false;
  bool no_dsfnet = false;
  bool no_relative_bias = false;
  SamplerConfig sampler;
  std::uint64_t seed = 42;
  double ranking_weight = 0.0;
  double beta = 0.5;
  std::size_t max_len = 0;
  std::size_t workers = 1;
  /// Epochs appended after `epochs` that train on search placeholders only,
  /// while the first `epochs` then skip them.
  std::size_t finetune_search_epochs = 0;
  Timestamp scenario_period = 25;
  int n_scenarios = 4;
  std::size_t eval_every = 1;  // 0 disables validation rows
  bool eval_aligned = false;   // validation protocol
  std::size_t eval_negatives = 99;

  void validate() const;
  /// Reads [train], [ablation] and [sampler].
  static TrainConfig from_config(const KvConfig& cfg);
  /// `base` with the ablation flags applied.
  ModelConfig model_config(ModelConfig base) const;
  SequenceOptions sequence_options(const ModelConfig& model) const;
  std::size_t total_epochs() const { return epochs + finetune_search_epochs; }
};

/// -(1/|A|) sum over groups of delta * log softmax(z)[positive], where |A| is
/// the number of groups. Throws ValidationError on an empty active group.
double infonce_loss(std::span<const std::vector<double>> logits,
                    std::span<const std::size_t> positives, std::span<const bool> delta);

/// Mean binary cross-entropy of logits against labels in {0, 1}.
double ranking_loss(std::span<const double> logits, std::span<const double> labels);

/// A sequence with candidates at its active placeholders.
struct TrainExample {
  EventSequence seq;
  std::vector<CandidateGroup> groups;
};

/// Tape handles for every parameter, bound to optional gradient sinks.
struct ParamVars {
  ad::Var item_emb, scenario_emb, feedback_emb, type_emb, universal, query_proj;
  ad::Var page_emb, task_emb, user_emb;
  struct Qdb {
    ad::Var w1, b1, w2, b2, rab_pos, rab_time;
  };
  std::vector<Qdb> qdb;
  struct Dsf {
    ad::Var w, b, gate_w1, gate_b1, gate_w2, gate_b2;
  };
  ad::Var filter_w, filter_b;
  std::vector<std::vector<Dsf>> dsf;
  ad::Var head_w1, head_b1, head_w2, head_b2;
};

/// Registers `p` on the tape. With `grads` null every handle is a constant.
/// Relative-bias tensors are constants when cfg.relative_bias is off.
ParamVars bind_params(ad::Tape& tape, const ModelParams& p, ModelParams* grads,
                      const ModelConfig& cfg);

/// Feature rows of a sequence followed by one row per candidate.
ad::Var tape_features(ad::Tape& tape, const ParamVars& v, const EventSequence& seq,
                      std::span<const CandidateGroup> groups);

/// The residual QDB stack over rows at `coords` under `mask`.
ad::Var tape_stack(ad::Tape& tape, const ParamVars& v, ad::Var x, const Matrix& mask,
                   const std::vector<std::int64_t>& pos, const std::vector<Timestamp>& t,
                   const ModelConfig& cfg);

/// DSFNet over rows `x` with one context row each in `r`.
ad::Var tape_dsfnet(ad::Tape& tape, const ParamVars& v, ad::Var x, ad::Var r,
                    const ModelConfig& cfg);

/// Context rows for the given placeholders of `seq`.
ad::Var tape_context(ad::Tape& tape, const ParamVars& v, const EventSequence& seq,
                     std::span<const std::size_t> placeholders);

/// Records the example's summed loss terms (unnormalized) and returns the
/// 1x1 total.
ad::Var record_example_loss(ad::Tape& tape, const ParamVars& v, const TrainExample& ex,
                            const ModelConfig& cfg, double ranking_weight);

struct GradientResult {
  ModelParams grads;
  double loss = 0.0;  // normalized batch loss
  std::size_t placeholders = 0;
};

/// Exact gradients of scale * (sum of active terms) / (placeholders in the
/// batch). Per-example gradients are summed in example order for any number
/// of workers. Throws NumericError naming the first non-finite gradient.
GradientResult compute_gradients(const ModelParams& params, std::span<const TrainExample> batch,
                                 const ModelConfig& cfg, double ranking_weight,
                                 std::size_t workers = 1, double scale = 1.0);

/// Loss only, with the same normalization.
double batch_loss(const ModelParams& params, std::span<const TrainExample> batch,
                  const ModelConfig& cfg, double ranking_weight);

class Adam {
 public:
  Adam(const ModelParams& like, double beta1, double beta2, double eps);
  /// Names listed in `frozen` are left untouched, moments included.
  void step(ModelParams& params, const ModelParams& grads, double lr,
            std::span<const std::string> frozen = {});
  std::uint64_t steps() const { return t_; }
  const ModelParams& m() const { return m_; }
  const ModelParams& v() const { return v_; }
  void restore(ModelParams m, ModelParams v, std::uint64_t t);

 private:
  ModelParams m_, v_;
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

/// Names of the relative-bias tensors.
std::vector<std::string> relative_bias_tensors(const ModelParams& p);

/// Whether placeholder `ph` carries a loss term in `epoch`.
bool placeholder_active(const Placeholder& ph, const TrainConfig& tc, std::size_t epoch);

/// One user's example for `epoch`: the train-split sequence with candidates
/// drawn at every active placeholder. HNS scores with `params`. The number of
/// negatives shrinks to the admissible count when fewer items qualify.
TrainExample build_example(std::uint32_t user, std::span<const Interaction> train,
                           const ModelParams& params, const ModelConfig& cfg,
                           const TrainConfig& tc, const QueryPool& pool,
                           const NegativeSampler& sampler, std::size_t epoch);

/// Parameters, model config, optimizer moments and progress in one file.
NamedTensors pack_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                             const Adam* adam, std::size_t epochs_done);
ModelConfig checkpoint_config(const NamedTensors& ck);
ModelParams checkpoint_params(const NamedTensors& ck, const ModelConfig& cfg);

struct TrainOptions {
  std::ostream* log = nullptr;  // metric CSV (header included)
  std::optional<NamedTensors> resume;
  std::function<void(std::size_t epoch, const NamedTensors& checkpoint)> on_epoch;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // indexed from the first epoch run here
  std::vector<std::string> log_rows;
  NamedTensors checkpoint;
};

/// Runs epochs [resumed, total_epochs()). Throws NumericError naming the
/// epoch and step when the loss diverges.
TrainResult train_loop(const Corpus& corpus, ModelParams params, const ModelConfig& cfg,
                       const TrainConfig& tc, const TrainOptions& options = {});

/// The query pool used for training and evaluation of a corpus.
QueryPool corpus_query_pool(const Corpus& corpus, std::uint64_t seed, std::size_t dim);

}  // namespace qdrec
