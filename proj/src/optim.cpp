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

#include "vibsplit/optim.hpp"

#include <algorithm>
#include <cmath>

namespace vibsplit {

double scheduled_lr(long step, long total_steps, const OptimConfig& cfg) {
  const long warmup = static_cast<long>(std::ceil(cfg.warmup_ratio * static_cast<double>(total_steps)));
  if (warmup > 0 && step < warmup)
    return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const long decay_steps = std::max(1L, total_steps - warmup);
  const double progress =
      std::clamp(static_cast<double>(step - warmup) / static_cast<double>(decay_steps), 0.0, 1.0);
  return cfg.lr * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
}

AdamW::AdamW(ParamRefs params, OptimConfig cfg, long total_steps)
    : params_(std::move(params)), cfg_(cfg), total_steps_(std::max(1L, total_steps)) {
  for (const Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

double AdamW::step() {
  const double norm = clip_grad_norm(params_, cfg_.grad_clip);
  const double lr = scheduled_lr(step_, total_steps_, cfg_);
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (p.decay && cfg_.weight_decay > 0.0) p.value *= 1.0 - lr * cfg_.weight_decay;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
    p.zero_grad();
  }
  return norm;
}

}  // namespace vibsplit
