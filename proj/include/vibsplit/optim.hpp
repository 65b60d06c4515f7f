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

#include <vector>

#include "vibsplit/nn.hpp"

namespace vibsplit {

struct OptimConfig {
  double lr = 1e-3;
  double warmup_ratio = 0.1;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global norm; <= 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Linear warmup to the peak rate, then cosine decay to zero.
double scheduled_lr(long step, long total_steps, const OptimConfig& cfg);

// Adam with decoupled weight decay. Moment buffers are keyed by position in
// the parameter list, which must stay fixed across steps.
class AdamW {
 public:
  AdamW(ParamRefs params, OptimConfig cfg, long total_steps);

  // Clips, applies one update at the scheduled rate and zeroes gradients.
  // Returns the pre-clip gradient norm.
  double step();

  long steps_taken() const { return step_; }
  double current_lr() const { return scheduled_lr(step_, total_steps_, cfg_); }

 private:
  ParamRefs params_;
  OptimConfig cfg_;
  long total_steps_;
  long step_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace vibsplit
