/*
 * Copyright 2026 The cmrqc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cmrqc/nn.hpp"

namespace cmrqc::testing {

struct GradCheckResult {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

// Central finite differences against the analytic gradients already stored
// in params. Relative error uses max(|analytic|, |numeric|, floor) so
// vanishing gradients are judged on an absolute scale.
inline GradCheckResult finite_difference_check(const std::vector<nn::Param*>& params,
                                               const std::function<double()>& loss,
                                               double eps = 1e-6, double floor = 1e-6) {
  GradCheckResult r;
  for (nn::Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = loss();
      p->value[i] = saved - eps;
      const double down = loss();
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic - numeric) / denom);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace cmrqc::testing
