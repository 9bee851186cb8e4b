// Copyright 2026 The ebus-slowfast Authors.
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

#include <cstdint>
#include <vector>

#include "ebus/ops.hpp"

namespace ebus {

struct SwavConfig {
  std::int64_t k_prototypes = 16;
  std::int64_t proj_dim = 32;
  double epsilon = 0.05;
  int sinkhorn_iters = 3;
  double temperature = 0.1;
  int k_views = 2;
  double swav_weight = 1.0;

  void validate() const;
};

/// Bias-free linear map followed by row normalization, so positively scaled
/// inputs give identical outputs.
template <typename T>
Var<T> project(Tape<T>& tape, const Var<T>& embedding, const Var<T>& weight);

/// Cosine similarities z * bank^T for unit-norm z and bank rows.
template <typename T>
Var<T> prototype_scores(Tape<T>& tape, const Var<T>& z, const Var<T>& bank);

/// Equipartitioned soft codes for a [B, K] score matrix, computed in double.
/// Each iteration scales columns to 1/K then rows to 1/B, so the returned row
/// sums are exactly 1/B up to rounding. Not differentiable.
template <typename T>
Tensor<T> sinkhorn_codes(const Tensor<T>& scores, double epsilon, int iters);

/// Total number of sinkhorn_codes calls in this process.
std::uint64_t sinkhorn_call_count();

/// Mean over ordered view pairs (a, b), a != b, of the cross-entropy between
/// softmax(scores[b] / tau) and codes[a] with rows rescaled to sum to one.
template <typename T>
Var<T> swapped_loss(Tape<T>& tape, const std::vector<Var<T>>& scores,
                    const std::vector<Tensor<T>>& codes, double temperature);

inline constexpr double kUnitNormSlack = 1e-6;

/// Rows divided by their L2 norm, in place. Rows whose norm is within
/// kUnitNormSlack of one are left unchanged, which makes the operation
/// idempotent.
template <typename T>
void renormalize_prototypes(Tensor<T>& bank);

}  // namespace ebus
