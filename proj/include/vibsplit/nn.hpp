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

#pragma once

#include <string>
#include <vector>

#include "vibsplit/types.hpp"

namespace vibsplit {

// A trainable tensor with its gradient accumulator. `decay` marks tensors that
// receive decoupled weight decay (weights yes, biases and logits no).
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;

  Param() = default;
  Param(std::string n, Matrix v, bool wd = true)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())),
        decay(wd) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParamRefs = std::vector<Param*>;
using ConstParamRefs = std::vector<const Param*>;

// y = x W^T + b, rows of x are frames.
struct Affine {
  Param weight;  // [out x in]
  Param bias;    // [out x 1]

  Affine() = default;
  Affine(const std::string& name, Eigen::Index in, Eigen::Index out, double init_scale, Rng& rng);

  Eigen::Index in_features() const { return weight.value.cols(); }
  Eigen::Index out_features() const { return weight.value.rows(); }

  Matrix forward(const Matrix& x) const;
  RowVector forward_row(const RowVector& x) const;
  // Accumulates parameter gradients and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);
  RowVector backward_row(const RowVector& x, const RowVector& dy);

  void collect(ParamRefs& out) { out.push_back(&weight); out.push_back(&bias); }
  void collect(ConstParamRefs& out) const { out.push_back(&weight); out.push_back(&bias); }
};

// Exact (erf) GELU.
Matrix gelu(const Matrix& x);
Matrix gelu_grad(const Matrix& x);

Vector softmax(const Vector& logits);
RowVector softmax_row(const RowVector& logits);
Matrix log_softmax_rows(const Matrix& logits);
double log_sum_exp(const Vector& v);

// Backward through softmax: given p = softmax(s) and dL/dp, returns dL/ds.
Vector softmax_backward(const Vector& p, const Vector& dp);

void zero_grads(const ParamRefs& params);
double global_grad_norm(const ParamRefs& params);
// Scales gradients so the global norm is at most max_norm. Returns the
// pre-clip norm.
double clip_grad_norm(const ParamRefs& params, double max_norm);
void scale_grads(const ParamRefs& params, double factor);

// Order-sensitive FNV-1a over the raw bytes of every parameter value.
std::uint64_t checksum(const ConstParamRefs& params);

}  // namespace vibsplit
