// Copyright 2026 The vibsplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vibsplit/nn.hpp"

#include <cmath>
#include <string_view>

namespace vibsplit {

Affine::Affine(const std::string& name, Eigen::Index in, Eigen::Index out, double init_scale,
               Rng& rng)
    : weight(name + ".weight", gaussian_matrix(out, in, init_scale, rng), true),
      bias(name + ".bias", Matrix::Zero(out, 1), false) {}

Matrix Affine::forward(const Matrix& x) const {
  Matrix y = x * weight.value.transpose();
  y.rowwise() += bias.value.col(0).transpose();
  return y;
}

RowVector Affine::forward_row(const RowVector& x) const {
  return x * weight.value.transpose() + bias.value.col(0).transpose();
}

Matrix Affine::backward(const Matrix& x, const Matrix& dy) {
  weight.grad.noalias() += dy.transpose() * x;
  bias.grad.col(0) += dy.colwise().sum().transpose();
  return dy * weight.value;
}

RowVector Affine::backward_row(const RowVector& x, const RowVector& dy) {
  weight.grad.noalias() += dy.transpose() * x;
  bias.grad.col(0) += dy.transpose();
  return dy * weight.value;
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
}

Matrix gelu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return cdf + v * pdf;
  });
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

RowVector softmax_row(const RowVector& logits) {
  return softmax(logits.transpose()).transpose();
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double m = logits.row(t).maxCoeff();
    const double lse = m + std::log((logits.row(t).array() - m).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

Vector softmax_backward(const Vector& p, const Vector& dp) {
  const double inner = p.dot(dp);
  return p.array() * (dp.array() - inner);
}

void zero_grads(const ParamRefs& params) {
  for (Param* p : params) p->zero_grad();
}

double global_grad_norm(const ParamRefs& params) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(const ParamRefs& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) scale_grads(params, max_norm / (norm + 1e-12));
  return norm;
}

void scale_grads(const ParamRefs& params, double factor) {
  for (Param* p : params) p->grad *= factor;
}

std::uint64_t checksum(const ConstParamRefs& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Param* p : params) {
    h = fnv1a(p->name, h);
    const auto* bytes = reinterpret_cast<const char*>(p->value.data());
    h = fnv1a(std::string_view(bytes, static_cast<std::size_t>(p->value.size()) * sizeof(double)), h);
  }
  return h;
}

}  // namespace vibsplit
