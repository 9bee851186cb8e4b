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

#include <array>
#include <optional>
#include <type_traits>
#include <vector>

#include "ebus/autograd.hpp"

// Differentiable operations. Every op takes the tape it records on first and
// is instantiated for float (training) and double (gradient checking).

namespace ebus {

/// (t, h, w) triple for kernel extents, strides and padding.
using Triple = std::array<std::int64_t, 3>;

/// floor((L + 2p - k) / s) + 1; throws ShapeError naming `axis` when the
/// padded extent is smaller than the window.
std::int64_t window_out_extent(std::int64_t extent, std::int64_t kernel,
                               std::int64_t stride, std::int64_t pad,
                               const char* axis);

// Non-deduced so callers can pass std::nullopt.
template <typename T>
using OptionalVar = std::type_identity_t<std::optional<Var<T>>>;

enum class PoolMode { kMax, kAvg };
enum class NormMode { kTrain, kEval };

/// Running statistics tracked by batch_norm3d in train mode.
template <typename T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;
  explicit BatchNormStats(std::int64_t channels = 1)
      : mean(Shape{channels}, T{0}), var(Shape{channels}, T{1}) {}
};

inline constexpr double kBatchNormMomentum = 0.9;

// input [N,C,T,H,W], kernel [C',C,kt,kh,kw], bias [C'] -> [N,C',T',H',W'].
template <typename T>
Var<T> conv3d(Tape<T>& tape, const Var<T>& input, const Var<T>& kernel,
              const OptionalVar<T>& bias, Triple stride, Triple pad);

// Padded cells never win a max and are excluded from an average.
template <typename T>
Var<T> pool3d(Tape<T>& tape, const Var<T>& input, PoolMode mode, Triple window,
              Triple stride, Triple pad = {0, 0, 0});

// [N,C,T,H,W] -> [N,C], mean over T,H,W.
template <typename T>
Var<T> global_avg_pool(Tape<T>& tape, const Var<T>& input);

// out[n,j] = sum_d weight[j,d] * input[n,d] + bias[j].
template <typename T>
Var<T> affine(Tape<T>& tape, const Var<T>& input, const Var<T>& weight,
              const OptionalVar<T>& bias);

/// Per-channel normalization over (N,T,H,W). Train mode uses batch
/// statistics and folds them into `stats` with momentum kBatchNormMomentum;
/// eval mode normalizes with `stats`.
template <typename T>
Var<T> batch_norm3d(Tape<T>& tape, const Var<T>& input, const Var<T>& scale,
                    const Var<T>& shift, BatchNormStats<T>& stats,
                    NormMode mode, double eps = 1e-5);

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& input);

/// Rows of a [N,D] input scaled to unit Euclidean norm. A row with norm
/// below eps is an error.
template <typename T>
Var<T> l2_normalize(Tape<T>& tape, const Var<T>& input, double eps = 1e-12);

/// Row softmax of input / temperature, max-subtracted.
template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& input, double temperature = 1.0);

/// Mean over rows of -sum_k target[k] * log softmax(logits / tau)[k]. Target
/// rows must lie on the simplex (sum 1 within 1e-6) and carry no gradient.
template <typename T>
Var<T> cross_entropy_soft(Tape<T>& tape, const Var<T>& logits,
                          const Tensor<T>& target, double temperature = 1.0);

/// Mean binary cross-entropy of sigmoid(logits) against labels in {0,1}.
/// logits [N] or [N,1]; labels has N entries.
template <typename T>
Var<T> logistic_loss(Tape<T>& tape, const Var<T>& logits,
                     const std::vector<T>& labels);

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, double factor);

template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& a);

template <typename T>
Var<T> mean(Tape<T>& tape, const Var<T>& a);

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& a, Shape dims);

/// Concatenates 2-D [N, D_i] inputs along the feature axis.
template <typename T>
Var<T> concat_cols(Tape<T>& tape, const std::vector<Var<T>>& parts);

/// Rows [begin, end) of a tensor, slicing along axis 0.
template <typename T>
Var<T> slice_rows(Tape<T>& tape, const Var<T>& a, std::int64_t begin,
                  std::int64_t end);

/// Same value, cut from the graph.
template <typename T>
Var<T> detach(Tape<T>& tape, const Var<T>& a);

}  // namespace ebus
