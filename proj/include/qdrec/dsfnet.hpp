// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scenario-conditioned output network. The scenario context R concatenates
// the scenario embedding, page context, task tag and user profile vectors.
// Inputs are first filtered by X . sigmoid([X, R] Wf + bf); each of the three
// layers then mixes its per-scenario weights as W = sum_g gamma_g W~_g with
// gamma_g = 2 sigmoid(gate_g(R)), gate_g being a one-hidden-layer SiLU
// perceptron. Hidden layers use SiLU, the last is linear.

#pragma once

#include <vector>

#include "qdrec/matrix.hpp"
#include "qdrec/model.hpp"

namespace qdrec {

/// Pre-sigmoid gate output of one scenario's gating perceptron (1 x 1).
double gate_logit(const Matrix& r, const DsfScenarioParams& s);

/// gamma_g = 2 sigmoid(gate_g(R)) for every scenario of layer `l`.
std::vector<double> scenario_weights(const Matrix& r, const DsfParams& p, std::size_t l);

/// X . sigmoid([X, R] Wf + bf), row by row; R is 1 x r and broadcast.
Matrix feature_filter(const Matrix& x, const Matrix& r, const DsfParams& p);

/// Sum over scenarios of gamma_g * (W~_g, b~_g).
std::pair<Matrix, Matrix> assemble_layer(const std::vector<DsfScenarioParams>& layer,
                                         const std::vector<double>& gamma);

/// One dynamic layer; `last` selects the linear output activation.
Matrix dynamic_layer(const Matrix& x, const Matrix& r, const DsfParams& p, std::size_t l,
                     bool last);

/// Filter followed by all dynamic layers. With `dynamic = false` the network
/// is a static perceptron built from the first scenario's weights with no
/// filter and no gating.
Matrix dsfnet_forward(const Matrix& x, const Matrix& r, const DsfParams& p, bool dynamic = true);

/// Ranking head d -> d (SiLU) -> 1; one logit per row.
Matrix ranking_head(const Matrix& o, const ModelParams& p);

}  // namespace qdrec
