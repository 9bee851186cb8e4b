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

#include <span>

#include "ebus/autograd.hpp"

namespace ebus {

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// v <- mu * v + (grad + wd * w);  w <- w - lr * v
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& opt) {
  if (!(opt.lr >= 0.0) || !(opt.momentum >= 0.0 && opt.momentum < 1.0) ||
      !(opt.weight_decay >= 0.0)) {
    throw Error(ErrorCode::kValue,
                "sgd_step: need lr >= 0, 0 <= momentum < 1, weight_decay >= 0");
  }
  const T lr = static_cast<T>(opt.lr);
  const T mu = static_cast<T>(opt.momentum);
  const T wd = static_cast<T>(opt.weight_decay);
  for (Parameter<T>* p : params) {
    auto w = p->value.data();
    auto g = p->grad.data();
    auto v = p->momentum.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] + (g[i] + wd * w[i]);
      w[i] -= lr * v[i];
    }
  }
}

template <typename T>
void zero_grad(std::span<Parameter<T>* const> params) {
  for (Parameter<T>* p : params) p->zero_grad();
}

}  // namespace ebus
