// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/dsfnet.hpp"

#include "qdrec/error.hpp"

namespace qdrec {

double gate_logit(const Matrix& r, const DsfScenarioParams& s) {
  return affine(silu(affine(r, s.gate_w1, s.gate_b1)), s.gate_w2, s.gate_b2)(0, 0);
}

std::vector<double> scenario_weights(const Matrix& r, const DsfParams& p, std::size_t l) {
  if (l >= p.layers.size()) throw LookupError("dsfnet layer " + std::to_string(l) + " out of range");
  if (r.rows() != 1) throw ValidationError("scenario context must be a single row");
  std::vector<double> gamma;
  for (const auto& s : p.layers[l]) gamma.push_back(2.0 * sigmoid(gate_logit(r, s)));
  return gamma;
}

namespace {

Matrix broadcast_rows(const Matrix& r, std::size_t n) {
  Matrix out(n, r.cols());
  for (std::size_t i = 0; i < n; ++i)
    std::copy(r.row(0).begin(), r.row(0).end(), out.row(i).begin());
  return out;
}

}  // namespace

Matrix feature_filter(const Matrix& x, const Matrix& r, const DsfParams& p) {
  if (r.rows() != 1) throw ValidationError("scenario context must be a single row");
  const Matrix gate = sigmoid(affine(concat_cols(x, broadcast_rows(r, x.rows())), p.filter_w,
                                     p.filter_b));
  return hadamard(x, gate);
}

std::pair<Matrix, Matrix> assemble_layer(const std::vector<DsfScenarioParams>& layer,
                                         const std::vector<double>& gamma) {
  if (layer.empty() || layer.size() != gamma.size())
    throw ValidationError("assemble_layer: need one weight per scenario");
  Matrix w(layer[0].w.rows(), layer[0].w.cols());
  Matrix b(1, layer[0].b.cols());
  for (std::size_t g = 0; g < layer.size(); ++g) {
    if (!layer[g].w.same_shape(w) || !layer[g].b.same_shape(b))
      throw ValidationError("assemble_layer: scenario weights differ in shape");
    for (std::size_t i = 0; i < w.size(); ++i) w.flat()[i] += gamma[g] * layer[g].w.flat()[i];
    for (std::size_t i = 0; i < b.size(); ++i) b.flat()[i] += gamma[g] * layer[g].b.flat()[i];
  }
  return {std::move(w), std::move(b)};
}

Matrix dynamic_layer(const Matrix& x, const Matrix& r, const DsfParams& p, std::size_t l,
                     bool last) {
  const auto [w, b] = assemble_layer(p.layers.at(l), scenario_weights(r, p, l));
  if (x.cols() != w.rows())
    throw ValidationError("dsfnet layer " + std::to_string(l) + ": input width " +
                          std::to_string(x.cols()) + " does not match " + std::to_string(w.rows()));
  Matrix y = affine(x, w, b);
  return last ? y : silu(y);
}

Matrix dsfnet_forward(const Matrix& x, const Matrix& r, const DsfParams& p, bool dynamic) {
  const std::size_t n = p.layers.size();
  if (!dynamic) {
    Matrix h = x;
    for (std::size_t l = 0; l < n; ++l) {
      const auto& s = p.layers[l].at(0);
      h = affine(h, s.w, s.b);
      if (l + 1 < n) h = silu(h);
    }
    return h;
  }
  Matrix h = feature_filter(x, r, p);
  for (std::size_t l = 0; l < n; ++l) h = dynamic_layer(h, r, p, l, l + 1 == n);
  return h;
}

Matrix ranking_head(const Matrix& o, const ModelParams& p) {
  return affine(silu(affine(o, p.head_w1, p.head_b1)), p.head_w2, p.head_b2);
}

}  // namespace qdrec
