// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include "qdrec/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qdrec/kernels.hpp"

namespace qdrec {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw std::invalid_argument("Matrix: data size does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged rows");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Matrix c(a.rows(), b.cols());
  kernels::gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: shape mismatch");
  Matrix c(a.rows(), b.rows());
  kernels::gemm_nt(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: shape mismatch");
  Matrix c(a.cols(), b.cols());
  kernels::gemm_tn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != w.cols())
    throw std::invalid_argument("affine: bias shape mismatch");
  Matrix y(x.rows(), w.cols());
  for (std::size_t r = 0; r < y.rows(); ++r)
    std::copy(bias.data(), bias.data() + bias.cols(), y.row(r).begin());
  if (x.cols() != w.rows()) throw std::invalid_argument("affine: shape mismatch");
  kernels::gemm_nn(x.data(), w.data(), y.data(), x.rows(), x.cols(), w.cols());
  return y;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("hadamard: shape mismatch");
  Matrix c(a.rows(), a.cols());
  kernels::hadamard(a.flat(), b.flat(), c.flat());
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  add_inplace(c, b);
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  auto out = a.flat();
  auto in = b.flat();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
}

void scale_inplace(Matrix& a, double s) {
  for (double& v : a.flat()) v *= s;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows()) throw std::out_of_range("select_rows: index out of range");
    std::copy(a.row(idx[i]).begin(), a.row(idx[i]).end(), out.row(i).begin());
  }
  return out;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) throw std::out_of_range("slice_cols: bad range");
  Matrix out(a.rows(), end - begin);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = a(r, c);
  return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + a.cols());
  }
  return out;
}

Matrix concat_rows(const Matrix& a, const Matrix& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.cols() != b.cols()) throw std::invalid_argument("concat_rows: col mismatch");
  std::vector<double> data(a.flat().begin(), a.flat().end());
  data.insert(data.end(), b.flat().begin(), b.flat().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

Matrix silu(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.flat()) v = silu(v);
  return out;
}

Matrix sigmoid(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.flat()) v = sigmoid(v);
  return out;
}

Matrix layer_norm_rows(const Matrix& a, double eps) {
  Matrix out(a.rows(), a.cols());
  const double n = static_cast<double>(a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto in = a.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = (in[c] - mean) * inv;
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.flat().begin(), a.flat().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace qdrec
