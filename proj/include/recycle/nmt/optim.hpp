// Copyright 2026 The nmt-recycle Authors
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "recycle/nmt/config.hpp"
#include "recycle/nmt/layers.hpp"

namespace recycle::nmt {

// Linear warm-up followed by reverse square root decay:
//   base_lr * min(step / warmup, 1) * max(step, warmup)^-1/2
inline double lr_schedule(std::int64_t step, double base_lr, std::int64_t warmup_steps) {
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  const double w = static_cast<double>(warmup_steps);
  return base_lr * std::min(s / w, 1.0) / std::sqrt(std::max(s, w));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;

  nlohmann::json to_json() const { return {{"name", "adam"}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}}; }
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

// Adam over a ParamStore. Parameters in frozen components are skipped
// entirely: neither their values nor their moments change.
template <typename T>
class Adam {
 public:
  Adam(const ParamStore<T>& params, AdamConfig cfg = {}) : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

  const AdamConfig& config() const { return cfg_; }
  ParamStore<T>& first_moment() { return m_; }
  ParamStore<T>& second_moment() { return v_; }
  const ParamStore<T>& first_moment() const { return m_; }
  const ParamStore<T>& second_moment() const { return v_; }

  // `step` is the 1-based global step of this update (bias correction).
  void update(ParamStore<T>& params, const ParamStore<T>& grads, double lr, std::int64_t step,
              const FreezeMask& freeze) {
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step));
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (freeze.is_frozen(params.name(i))) continue;
      auto g = grads[i].array();
      m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
      params[i].array() -= step_size * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

 private:
  AdamConfig cfg_;
  ParamStore<T> m_;
  ParamStore<T> v_;
};

}  // namespace recycle::nmt
