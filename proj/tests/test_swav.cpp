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

#include <gtest/gtest.h>

#include <cmath>

#include "ebus/error.hpp"
#include "ebus/rng.hpp"
#include "ebus/swav.hpp"

namespace ebus {
namespace {

Tensor<double> random_tensor(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(dims));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor<double> unit_rows(Tensor<double> t) {
  const auto n = t.dim(0), d = t.dim(1);
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < d; ++j) s += t.at({i, j}) * t.at({i, j});
    for (std::int64_t j = 0; j < d; ++j) t.at({i, j}) /= std::sqrt(s);
  }
  return t;
}

// Plain alternating normalization on exp(s / eps), no shifting tricks.
Tensor<double> sinkhorn_oracle(const Tensor<double>& s, double eps, int iters) {
  const auto B = s.dim(0), K = s.dim(1);
  Tensor<double> q(s.dims());
  for (std::size_t i = 0; i < q.numel(); ++i) q[i] = std::exp(s[i] / eps);
  for (int it = 0; it < iters; ++it) {
    for (std::int64_t k = 0; k < K; ++k) {
      double c = 0;
      for (std::int64_t b = 0; b < B; ++b) c += q.at({b, k});
      for (std::int64_t b = 0; b < B; ++b) q.at({b, k}) /= c * K;
    }
    for (std::int64_t b = 0; b < B; ++b) {
      double r = 0;
      for (std::int64_t k = 0; k < K; ++k) r += q.at({b, k});
      for (std::int64_t k = 0; k < K; ++k) q.at({b, k}) /= r * B;
    }
  }
  return q;
}

double mean_row_entropy(const Tensor<double>& codes) {
  const auto B = codes.dim(0), K = codes.dim(1);
  double h = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    double r = 0;
    for (std::int64_t k = 0; k < K; ++k) r += codes.at({b, k});
    for (std::int64_t k = 0; k < K; ++k) {
      const double p = codes.at({b, k}) / r;
      if (p > 0) h -= p * std::log(p);
    }
  }
  return h / B;
}

TEST(Project, RowsUnitNormAndScaleInvariant) {
  Rng rng(1);
  Tape<double> tape(false);
  auto e = random_tensor(rng, {4, 10});
  auto w = tape.constant(random_tensor(rng, {6, 10}));
  auto z = project(tape, tape.constant(e), w).value();
  for (std::int64_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < 6; ++j) s += z.at({i, j}) * z.at({i, j});
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-12);
  }
  auto scaled = e;
  for (std::int64_t j = 0; j < 10; ++j) scaled.at({2, j}) *= 10.0;
  auto z2 = project(tape, tape.constant(scaled), w).value();
  for (std::int64_t j = 0; j < 6; ++j) EXPECT_NEAR(z2.at({2, j}), z.at({2, j}), 1e-12);
}

TEST(Project, IdentityOnUnitRow) {
  Tape<double> tape(false);
  Tensor<double> eye({2, 2}, 0.0);
  eye.at({0, 0}) = eye.at({1, 1}) = 1.0;
  auto z = project(tape, tape.constant(Tensor<double>({1, 2}, {0.6, 0.8})), tape.constant(eye));
  EXPECT_NEAR(z.value()[0], 0.6, 1e-15);
  EXPECT_NEAR(z.value()[1], 0.8, 1e-15);
  EXPECT_THROW(project(tape, tape.constant(Tensor<double>({1, 2}, 0.0)), tape.constant(eye)), Error);
}

TEST(Scores, DotProducts) {
  Tape<double> tape(false);
  auto z = tape.constant(Tensor<double>({1, 2}, {1.0, 0.0}));
  auto bank = tape.constant(Tensor<double>({3, 2}, {0.6, 0.8, 1.0, 0.0, 0.0, 1.0}));
  auto s = prototype_scores(tape, z, bank).value();
  EXPECT_NEAR(s[0], 0.6, 1e-15);
  EXPECT_EQ(s[1], 1.0);
  EXPECT_EQ(s[2], 0.0);
  EXPECT_THROW(prototype_scores(tape, z, tape.constant(Tensor<double>({3, 3}))), ShapeError);
}

TEST(Sinkhorn, UniformFixedPoint) {
  Tensor<double> s({5, 7}, 0.3);
  auto q = sinkhorn_codes(s, 0.05, 100);
  for (auto v : q.data()) EXPECT_NEAR(v, 1.0 / 35.0, 1e-12);
}

TEST(Sinkhorn, DiagonalTwoByTwo) {
  Tensor<double> s({2, 2}, {1.0, -1.0, -1.0, 1.0});
  auto q = sinkhorn_codes(s, 0.05, 100);
  auto oracle = sinkhorn_oracle(s, 0.05, 100);
  const double half_eye[] = {0.5, 0.0, 0.0, 0.5};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(q[i], half_eye[i], 1e-3);
    EXPECT_NEAR(q[i], oracle[i], 1e-12);
  }
}

TEST(Sinkhorn, MatchesOracleOnModerateScores) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = random_tensor(rng, {6, 5});
    auto q = sinkhorn_codes(s, 0.5, 20);
    auto o = sinkhorn_oracle(s, 0.5, 20);
    for (std::size_t i = 0; i < q.numel(); ++i) EXPECT_NEAR(q[i], o[i], 1e-12);
  }
}

TEST(Sinkhorn, Marginals) {
  Rng rng(8);
  // At epsilon 0.05 the column error after 100 iterations depends on the draw;
  // 0.1 converges on every draw at this shape.
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t B = 8, K = 16;
    auto z = unit_rows(random_tensor(rng, {B, 32}));
    auto c = unit_rows(random_tensor(rng, {K, 32}));
    Tape<double> tape(false);
    auto s = prototype_scores(tape, tape.constant(z), tape.constant(c)).value();
    auto q = sinkhorn_codes(s, 0.1, 100);
    double total = 0;
    for (std::int64_t b = 0; b < B; ++b) {
      double r = 0;
      for (std::int64_t k = 0; k < K; ++k) {
        ASSERT_GE(q.at({b, k}), 0.0);
        r += q.at({b, k});
      }
      EXPECT_NEAR(r, 1.0 / B, 1e-15);
      total += r;
    }
    EXPECT_NEAR(total, 1.0, 1e-14);
    for (std::int64_t k = 0; k < K; ++k) {
      double col = 0;
      for (std::int64_t b = 0; b < B; ++b) col += q.at({b, k});
      EXPECT_NEAR(col, 1.0 / K, 1e-6);
    }
  }
}

TEST(Sinkhorn, LargeEpsilonApproachesUniform) {
  Rng rng(2);
  auto s = random_tensor(rng, {6, 4});
  double prev = 1e300;
  for (double eps : {0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0}) {
    auto q = sinkhorn_codes(s, eps, 100);
    double dist = 0;
    for (auto v : q.data()) dist += std::abs(v - 1.0 / 24.0);
    EXPECT_LT(dist, prev) << "eps " << eps;
    prev = dist;
  }
  EXPECT_LT(prev, 1e-2);
}

TEST(Sinkhorn, Errors) {
  Tensor<double> s({2, 2}, 0.0);
  s[1] = std::nan("");
  EXPECT_THROW(sinkhorn_codes(s, 0.05, 3), Error);
  s[1] = INFINITY;
  EXPECT_THROW(sinkhorn_codes(s, 0.05, 3), Error);
}

TEST(Sinkhorn, FloatMatchesDouble) {
  Rng rng(3);
  auto s = random_tensor(rng, {4, 3});
  auto qd = sinkhorn_codes(s, 0.1, 50);
  auto qf = sinkhorn_codes(s.cast<float>(), 0.1, 50);
  for (std::size_t i = 0; i < qd.numel(); ++i) EXPECT_NEAR(qf[i], qd[i], 1e-6);
}

TEST(SwappedLoss, ClosedFormLogistic) {
  Tape<double> tape(false);
  auto s_a = tape.constant(Tensor<double>({1, 2}, {0.0, 2.0}));
  auto s_b = tape.constant(Tensor<double>({1, 2}, {2.0, 0.0}));
  Tensor<double> q_a({1, 2}, {1.0, 0.0});
  Tensor<double> q_b({1, 2}, {0.0, 1.0});
  // Both pairs reduce to -log(e^2 / (e^2 + 1)).
  auto loss = swapped_loss(tape, {s_a, s_b}, {q_a, q_b}, 1.0);
  EXPECT_NEAR(loss.value()[0], -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0)), 1e-12);
  EXPECT_NEAR(loss.value()[0], 0.1269, 1e-4);
}

TEST(SwappedLoss, UniformPredictionsGiveLogK) {
  Rng rng(5);
  Tape<double> tape(false);
  const std::int64_t B = 4, K = 6;
  auto s = tape.constant(Tensor<double>({B, K}, 0.25));
  auto q0 = sinkhorn_codes(random_tensor(rng, {B, K}), 0.1, 10);
  auto q1 = sinkhorn_codes(random_tensor(rng, {B, K}), 0.1, 10);
  auto loss = swapped_loss(tape, {s, s}, {q0, q1}, 0.1);
  EXPECT_NEAR(loss.value()[0], std::log(double(K)), 1e-12);
}

TEST(SwappedLoss, OwnCodesGiveEntropy) {
  Rng rng(6);
  Tape<double> tape(false);
  const std::int64_t B = 3, K = 5;
  const double tau = 0.5;
  // Row-normalized codes as softmax(s / tau): s = tau * log(p).
  auto q = sinkhorn_codes(random_tensor(rng, {B, K}), 0.3, 10);
  Tensor<double> s({B, K});
  for (std::int64_t b = 0; b < B; ++b) {
    double r = 0;
    for (std::int64_t k = 0; k < K; ++k) r += q.at({b, k});
    for (std::int64_t k = 0; k < K; ++k) s.at({b, k}) = tau * std::log(q.at({b, k}) / r);
  }
  auto sv = tape.constant(s);
  auto loss = swapped_loss(tape, {sv, sv, sv}, {q, q, q}, tau);
  EXPECT_NEAR(loss.value()[0], mean_row_entropy(q), 1e-12);
}

TEST(SwappedLoss, GibbsLowerBound) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Tape<double> tape(false);
    const std::int64_t B = 4, K = 5;
    std::vector<Var<double>> scores;
    std::vector<Tensor<double>> codes;
    double bound = 0;
    for (int v = 0; v < 3; ++v) {
      scores.push_back(tape.constant(random_tensor(rng, {B, K})));
      codes.push_back(sinkhorn_codes(random_tensor(rng, {B, K}), 0.2, 5));
      bound += mean_row_entropy(codes.back()) / 3.0;
    }
    EXPECT_GE(swapped_loss(tape, scores, codes, 0.1).value()[0], bound - 1e-12);
  }
}

TEST(SwappedLoss, SymmetricInViewOrder) {
  Rng rng(9);
  Tape<double> tape(false);
  auto s0 = tape.constant(random_tensor(rng, {3, 4}));
  auto s1 = tape.constant(random_tensor(rng, {3, 4}));
  auto q0 = sinkhorn_codes(s0.value(), 0.05, 3);
  auto q1 = sinkhorn_codes(s1.value(), 0.05, 3);
  EXPECT_NEAR(swapped_loss(tape, {s0, s1}, {q0, q1}, 0.1).value()[0],
              swapped_loss(tape, {s1, s0}, {q1, q0}, 0.1).value()[0], 1e-14);
  EXPECT_THROW(swapped_loss(tape, {s0}, {q0}, 0.1), Error);
}

TEST(SwappedLoss, NoGradientThroughCodes) {
  Rng rng(10);
  const std::int64_t B = 3, K = 4;
  const double tau = 0.2;
  Tape<double> tape;
  auto s0 = tape.leaf(random_tensor(rng, {B, K}));
  auto s1 = tape.constant(random_tensor(rng, {B, K}));
  auto q0 = sinkhorn_codes(s0.value(), 0.05, 3);
  auto q1 = sinkhorn_codes(s1.value(), 0.05, 3);
  auto loss = swapped_loss(tape, {s0, s1}, {q0, q1}, tau);
  tape.backward(loss);
  // s0 enters only as the prediction for q1; the pair predicting q0 contributes nothing.
  for (std::int64_t b = 0; b < B; ++b) {
    double mx = -1e300, z = 0, r = 0;
    for (std::int64_t k = 0; k < K; ++k) mx = std::max(mx, s0.value().at({b, k}) / tau);
    for (std::int64_t k = 0; k < K; ++k) z += std::exp(s0.value().at({b, k}) / tau - mx);
    for (std::int64_t k = 0; k < K; ++k) r += q1.at({b, k});
    for (std::int64_t k = 0; k < K; ++k) {
      const double p = std::exp(s0.value().at({b, k}) / tau - mx) / z;
      const double want = (p - q1.at({b, k}) / r) / (tau * B * 2);
      EXPECT_NEAR(s0.grad().at({b, k}), want, 1e-12);
    }
  }
}

TEST(Prototypes, Renormalize) {
  Tensor<double> bank({2, 2}, {3.0, 4.0, 0.6, 0.8});
  renormalize_prototypes(bank);
  EXPECT_NEAR(bank[0], 0.6, 1e-15);
  EXPECT_NEAR(bank[1], 0.8, 1e-15);
  EXPECT_EQ(bank[2], 0.6);
  EXPECT_EQ(bank[3], 0.8);

  Rng rng(11);
  Tensor<double> zero_row({1, 3}, 0.0);
  auto t = random_tensor(rng, {16, 32}).cast<float>();
  renormalize_prototypes(t);
  auto once = t;
  renormalize_prototypes(t);
  EXPECT_EQ(t, once);
  EXPECT_THROW(renormalize_prototypes(zero_row), Error);
}

TEST(SwavConfig, Validation) {
  SwavConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.k_views = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = SwavConfig{};
  cfg.epsilon = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace ebus
