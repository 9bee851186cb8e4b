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
#include <functional>
#include <string>
#include <vector>

#include "ebus/ops.hpp"

namespace ebus {

/// Builds a scalar from the given inputs on the given tape.
using ScalarFn =
    std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Largest |analytic - numeric| over all input elements, divided by the
/// largest gradient magnitude of either kind (so the error is relative to the
/// scale of the gradient being checked).
struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

/// Compares reverse-mode gradients of `fn` with central differences
/// (f(x+h) - f(x-h)) / 2h, perturbing every element of every input.
GradCheckReport check_gradients(const ScalarFn& fn,
                                const std::vector<Tensor<double>>& inputs,
                                double h = 1e-4);

struct OpCheckResult {
  std::string op;
  int cases = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Runs every differentiable operation on `cases_per_op` random small shapes
/// in 64-bit mode.
std::vector<OpCheckResult> run_gradient_suite(std::uint64_t seed,
                                              int cases_per_op = 20,
                                              double tolerance = 1e-5);

}  // namespace ebus
