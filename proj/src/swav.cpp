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

#include "ebus/swav.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <string>

#include "ebus/error.hpp"

namespace ebus {

namespace {
std::atomic<std::uint64_t> g_sinkhorn_calls{0};
}  // namespace

void SwavConfig::validate() const {
  if (k_prototypes <= 0 || proj_dim <= 0) {
    throw Error(ErrorCode::kConfig, "k_prototypes and proj_dim must be positive");
  }
  if (!(epsilon > 0.0) || !(temperature > 0.0)) {
    throw Error(ErrorCode::kConfig, "epsilon and temperature must be positive");
  }
  if (sinkhorn_iters <= 0) throw Error(ErrorCode::kConfig, "sinkhorn_iters must be positive");
  if (k_views < 2) throw Error(ErrorCode::kConfig, "k_views must be at least 2");
  if (!(swav_weight >= 0.0)) throw Error(ErrorCode::kConfig, "swav_weight must be >= 0");
}

template <typename T>
Var<T> project(Tape<T>& tape, const Var<T>& embedding, const Var<T>& weight) {
  return l2_normalize(tape, affine(tape, embedding, weight, std::nullopt));
}

template <typename T>
Var<T> prototype_scores(Tape<T>& tape, const Var<T>& z, const Var<T>& bank) {
  if (z.dims().size() != 2 || bank.dims().size() != 2 || z.dim(1) != bank.dim(1)) {
    throw ShapeError("D", "prototype_scores: z " + shape_str(z.dims()) + " vs bank " +
                              shape_str(bank.dims()));
  }
  return affine(tape, z, bank, std::nullopt);
}

std::uint64_t sinkhorn_call_count() { return g_sinkhorn_calls.load(); }

template <typename T>
Tensor<T> sinkhorn_codes(const Tensor<T>& scores, double epsilon, int iters) {
  g_sinkhorn_calls.fetch_add(1);
  if (scores.rank() != 2) throw ShapeError("rank", "sinkhorn_codes expects [B, K] scores");
  if (!(epsilon > 0.0) || iters < 1) {
    throw Error(ErrorCode::kValue, "sinkhorn_codes: need epsilon > 0 and iters >= 1");
  }
  const std::int64_t b = scores.dim(0), k = scores.dim(1);
  const auto s = scores.data();
  double smax = -INFINITY;
  for (T v : s) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw Error(ErrorCode::kNumeric, "sinkhorn_codes: non-finite score");
    }
    smax = std::max(smax, static_cast<double>(v));
  }
  std::vector<double> q(s.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = std::exp((static_cast<double>(s[i]) - smax) / epsilon);
    total += q[i];
  }
  for (double& v : q) v /= total;

  std::vector<double> col(static_cast<std::size_t>(k));
  for (int it = 0; it < iters; ++it) {
    std::fill(col.begin(), col.end(), 0.0);
    for (std::int64_t r = 0; r < b; ++r)
      for (std::int64_t c = 0; c < k; ++c) col[c] += q[r * k + c];
    for (std::int64_t c = 0; c < k; ++c) {
      if (!(col[c] > 0.0)) {
        throw Error(ErrorCode::kNumeric, "sinkhorn_codes: prototype column underflowed; "
                                         "increase epsilon");
      }
    }
    for (std::int64_t r = 0; r < b; ++r)
      for (std::int64_t c = 0; c < k; ++c) q[r * k + c] /= col[c] * static_cast<double>(k);
    for (std::int64_t r = 0; r < b; ++r) {
      double row = 0.0;
      for (std::int64_t c = 0; c < k; ++c) row += q[r * k + c];
      for (std::int64_t c = 0; c < k; ++c) q[r * k + c] /= row * static_cast<double>(b);
    }
  }
  Tensor<T> out(scores.dims());
  for (std::size_t i = 0; i < q.size(); ++i) out.data()[i] = static_cast<T>(q[i]);
  return out;
}

template <typename T>
Var<T> swapped_loss(Tape<T>& tape, const std::vector<Var<T>>& scores,
                    const std::vector<Tensor<T>>& codes, double temperature) {
  if (scores.size() < 2 || codes.size() != scores.size()) {
    throw Error(ErrorCode::kValue, "swapped_loss needs >= 2 views with one code matrix each");
  }
  std::vector<Tensor<T>> targets;
  for (const auto& q : codes) {
    if (q.rank() != 2) throw ShapeError("rank", "codes must be [B, K]");
    Tensor<T> t = q;
    const std::int64_t b = q.dim(0), k = q.dim(1);
    for (std::int64_t r = 0; r < b; ++r) {
      double row = 0.0;
      for (std::int64_t c = 0; c < k; ++c) row += static_cast<double>(t.at({r, c}));
      if (!(row > 0.0)) throw Error(ErrorCode::kValue, "code row has zero mass");
      for (std::int64_t c = 0; c < k; ++c) t.at({r, c}) = static_cast<T>(t.at({r, c}) / row);
    }
    targets.push_back(std::move(t));
  }
  std::optional<Var<T>> total;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    for (std::size_t b = 0; b < scores.size(); ++b) {
      if (a == b) continue;
      auto term = cross_entropy_soft(tape, scores[b], targets[a], temperature);
      total = total ? add(tape, *total, term) : term;
      ++pairs;
    }
  }
  return scale(tape, *total, 1.0 / static_cast<double>(pairs));
}

template <typename T>
void renormalize_prototypes(Tensor<T>& bank) {
  if (bank.rank() != 2) throw ShapeError("rank", "prototype bank must be [K, D]");
  const std::int64_t k = bank.dim(0), d = bank.dim(1);
  for (std::int64_t r = 0; r < k; ++r) {
    double norm = 0.0;
    for (std::int64_t c = 0; c < d; ++c) {
      const double v = static_cast<double>(bank.at({r, c}));
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw Error(ErrorCode::kValue, "prototype row " + std::to_string(r) + " is zero");
    // Rows already unit up to float rounding are left bit-for-bit alone.
    if (std::abs(norm - 1.0) <= kUnitNormSlack) continue;
    for (std::int64_t c = 0; c < d; ++c) bank.at({r, c}) = static_cast<T>(bank.at({r, c}) / norm);
  }
}

#define EBUS_INSTANTIATE_SWAV(T)                                                        \
  template Var<T> project<T>(Tape<T>&, const Var<T>&, const Var<T>&);                   \
  template Var<T> prototype_scores<T>(Tape<T>&, const Var<T>&, const Var<T>&);          \
  template Tensor<T> sinkhorn_codes<T>(const Tensor<T>&, double, int);                  \
  template Var<T> swapped_loss<T>(Tape<T>&, const std::vector<Var<T>>&,                 \
                                  const std::vector<Tensor<T>>&, double);               \
  template void renormalize_prototypes<T>(Tensor<T>&);

EBUS_INSTANTIATE_SWAV(float)
EBUS_INSTANTIATE_SWAV(double)

}  // namespace ebus
