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

#include "vibsplit/attention.hpp"

#include <cmath>

#include "vibsplit/error.hpp"

namespace vibsplit {

AttentionPooler::AttentionPooler(const std::string& prefix, Eigen::Index d, double init_scale,
                                 Rng& rng)
    : query(prefix + ".query", gaussian_matrix(d, 1, init_scale, rng), true),
      key_map(prefix + ".key", d, d, init_scale, rng) {}

PoolResult attention_pool(const Matrix& z, const AttentionPooler& pooler) {
  if (z.rows() < 1) throw InvalidInput("attention_pool: need at least one frame");
  if (z.cols() != pooler.width())
    throw InvalidInput("attention_pool: latent width " + std::to_string(z.cols()) +
                       " does not match pooler width " + std::to_string(pooler.width()));
  PoolResult r;
  r.keys = pooler.key_map.forward(z);
  const double scale = 1.0 / std::sqrt(static_cast<double>(z.cols()));
  const Vector scores = scale * (r.keys * pooler.query.value.col(0));
  r.weights = softmax(scores);
  r.pooled = r.weights.transpose() * z;
  return r;
}

Matrix attention_pool_backward(const Matrix& z, AttentionPooler& pooler, const PoolResult& fwd,
                               const RowVector& d_pooled) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(z.cols()));
  // pooled = sum_t w_t z_t
  Matrix dz = fwd.weights * d_pooled;
  const Vector dw = z * d_pooled.transpose();
  const Vector ds = softmax_backward(fwd.weights, dw);
  // score_t = scale * q . k_t
  const Vector q = pooler.query.value.col(0);
  pooler.query.grad.col(0) += scale * (fwd.keys.transpose() * ds);
  const Matrix d_keys = scale * ds * q.transpose();
  dz += pooler.key_map.backward(z, d_keys);
  return dz;
}

}  // namespace vibsplit
