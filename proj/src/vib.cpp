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

#include "vibsplit/vib.hpp"

#include <cmath>
#include <string>

#include "vibsplit/error.hpp"

namespace vibsplit {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()) + ")");
}

}  // namespace

BottleneckEncoderParams::BottleneckEncoderParams(const std::string& prefix,
                                                 Eigen::Index input_width, Eigen::Index d,
                                                 double init_gain, Rng& rng)
    : shared1(prefix + ".shared1", input_width, input_width,
              init_gain / std::sqrt(static_cast<double>(input_width)), rng),
      shared2(prefix + ".shared2", input_width, input_width,
              init_gain / std::sqrt(static_cast<double>(input_width)), rng),
      head_mean(prefix + ".head_mean", input_width, d,
                init_gain / std::sqrt(static_cast<double>(input_width)), rng),
      head_logvar(prefix + ".head_logvar", input_width, d,
                  0.1 * init_gain / std::sqrt(static_cast<double>(input_width)), rng) {}

void BottleneckEncoderParams::collect(ParamRefs& out) {
  shared1.collect(out);
  shared2.collect(out);
  head_mean.collect(out);
  head_logvar.collect(out);
}

void BottleneckEncoderParams::collect(ConstParamRefs& out) const {
  shared1.collect(out);
  shared2.collect(out);
  head_mean.collect(out);
  head_logvar.collect(out);
}

GaussianLatent encode_bottleneck(const Matrix& h, const BottleneckEncoderParams& params,
                                 EncoderCache* cache) {
  if (h.rows() < 1) throw InvalidInput("encode_bottleneck: need at least one frame");
  if (h.cols() != params.input_width())
    throw InvalidInput("encode_bottleneck: input width " + std::to_string(h.cols()) +
                       " does not match encoder width " + std::to_string(params.input_width()));
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  c.pre1 = params.shared1.forward(h);
  c.act1 = gelu(c.pre1);
  c.pre2 = params.shared2.forward(c.act1);
  c.act2 = gelu(c.pre2);
  GaussianLatent out;
  out.mean = params.head_mean.forward(c.act2);
  out.std = (0.5 * params.head_logvar.forward(c.act2).array()).exp();
  return out;
}

Matrix encode_bottleneck_backward(const Matrix& h, BottleneckEncoderParams& params,
                                  const EncoderCache& cache, const GaussianLatent& latent,
                                  const Matrix& d_mean, const Matrix& d_std) {
  // std = exp(logvar / 2)  =>  d std / d logvar = std / 2
  const Matrix d_logvar = 0.5 * d_std.cwiseProduct(latent.std);
  Matrix d_act2 = params.head_mean.backward(cache.act2, d_mean);
  d_act2 += params.head_logvar.backward(cache.act2, d_logvar);
  const Matrix d_pre2 = d_act2.cwiseProduct(gelu_grad(cache.pre2));
  const Matrix d_act1 = params.shared2.backward(cache.act1, d_pre2);
  const Matrix d_pre1 = d_act1.cwiseProduct(gelu_grad(cache.pre1));
  return params.shared1.backward(h, d_pre1);
}

Matrix reparameterize(const GaussianLatent& latent, const Matrix& eps) {
  require_same_shape(latent.mean, eps, "reparameterize");
  return latent.mean + latent.std.cwiseProduct(eps);
}

Matrix inference_latent(const GaussianLatent& latent) { return latent.mean; }

double gaussian_kl(const GaussianLatent& latent) {
  require_same_shape(latent.mean, latent.std, "gaussian_kl");
  if (latent.frames() == 0) throw InvalidInput("gaussian_kl: empty latent");
  if ((latent.std.array() <= 0.0).any() || !latent.std.allFinite())
    throw InvalidInput("gaussian_kl: standard deviation must be strictly positive");
  const auto var = latent.std.array().square();
  const double total =
      0.5 * (latent.mean.array().square() + var - var.log() - 1.0).sum();
  return total / static_cast<double>(latent.frames());
}

KlGradient gaussian_kl_grad(const GaussianLatent& latent) {
  const double inv_frames = 1.0 / static_cast<double>(latent.frames());
  KlGradient g;
  g.d_mean = latent.mean * inv_frames;
  g.d_std = (latent.std.array() - latent.std.array().inverse()).matrix() * inv_frames;
  return g;
}

double beta_at(long step, const BetaSchedule& schedule) {
  if (schedule.total_steps <= 0) throw InvalidInput("beta_at: total_steps must be positive");
  if (step < 0 || step > schedule.total_steps)
    throw InvalidInput("beta_at: step " + std::to_string(step) + " outside [0, " +
                       std::to_string(schedule.total_steps) + "]");
  if (step == schedule.total_steps) return schedule.beta_end;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  return schedule.beta_start + (schedule.beta_end - schedule.beta_start) * frac;
}

}  // namespace vibsplit
