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
#include "vibsplit/types.hpp"

namespace vibsplit {

// Per-frame diagonal Gaussian posterior q(z | h_t) = N(mean_t, diag(std_t^2)).
struct GaussianLatent {
  Matrix mean;  // [frames x d]
  Matrix std;   // [frames x d], strictly positive

  Eigen::Index frames() const { return mean.rows(); }
  Eigen::Index width() const { return mean.cols(); }
};

// Shared trunk (D -> D -> D with GELU after each layer) feeding a mean head and
// a log-variance head.
struct BottleneckEncoderParams {
  Affine shared1;
  Affine shared2;
  Affine head_mean;
  Affine head_logvar;

  BottleneckEncoderParams() = default;
  // Weights ~ N(0, (init_gain^2 / fan_in)), biases 0; the log-variance head
  // bias starts at 0 so the initial posterior scale is 1.
  BottleneckEncoderParams(const std::string& prefix, Eigen::Index input_width, Eigen::Index d,
                          double init_gain, Rng& rng);

  Eigen::Index input_width() const { return shared1.in_features(); }
  Eigen::Index latent_width() const { return head_mean.out_features(); }

  void collect(ParamRefs& out);
  void collect(ConstParamRefs& out) const;
};

// Intermediate activations kept for the backward pass.
struct EncoderCache {
  Matrix pre1, act1, pre2, act2;
};

GaussianLatent encode_bottleneck(const Matrix& h, const BottleneckEncoderParams& params,
                                 EncoderCache* cache = nullptr);

// Accumulates parameter gradients from dL/dmean and dL/dstd and returns dL/dh.
Matrix encode_bottleneck_backward(const Matrix& h, BottleneckEncoderParams& params,
                                  const EncoderCache& cache, const GaussianLatent& latent,
                                  const Matrix& d_mean, const Matrix& d_std);

// z = mean + std * eps. The noise is an input; gradients go to mean and std only.
Matrix reparameterize(const GaussianLatent& latent, const Matrix& eps);

// Deterministic evaluation-time latent: the posterior mean.
Matrix inference_latent(const GaussianLatent& latent);

// KL(q || N(0, I)), summed over latent dimensions and averaged over frames.
double gaussian_kl(const GaussianLatent& latent);

struct KlGradient {
  Matrix d_mean;
  Matrix d_std;
};
KlGradient gaussian_kl_grad(const GaussianLatent& latent);

// Linear annealing of the information-loss weight.
struct BetaSchedule {
  double beta_start = 0.1;
  double beta_end = 1.0;
  long total_steps = 1;
};

double beta_at(long step, const BetaSchedule& schedule);

}  // namespace vibsplit
