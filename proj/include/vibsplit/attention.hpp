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

#include "vibsplit/nn.hpp"

namespace vibsplit {

// Single learned query against a linear key map:
//   score_t = query . (W z_t + b) / sqrt(d),  weights = softmax(score).
struct AttentionPooler {
  Param query;  // [d x 1]
  Affine key_map;

  AttentionPooler() = default;
  AttentionPooler(const std::string& prefix, Eigen::Index d, double init_scale, Rng& rng);

  Eigen::Index width() const { return query.value.rows(); }
  void collect(ParamRefs& out) { out.push_back(&query); key_map.collect(out); }
  void collect(ConstParamRefs& out) const { out.push_back(&query); key_map.collect(out); }
};

struct PoolResult {
  RowVector pooled;  // [1 x d]
  Vector weights;    // [frames]
  Matrix keys;       // cached for backward
};

PoolResult attention_pool(const Matrix& z, const AttentionPooler& pooler);

// Accumulates pooler gradients and returns dL/dz.
Matrix attention_pool_backward(const Matrix& z, AttentionPooler& pooler, const PoolResult& fwd,
                               const RowVector& d_pooled);

}  // namespace vibsplit
