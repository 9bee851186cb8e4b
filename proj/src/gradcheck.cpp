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

#include "ebus/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ebus/rng.hpp"

namespace ebus {

namespace {

using D = double;

double eval_scalar(const ScalarFn& fn, const std::vector<Tensor<D>>& inputs) {
  Tape<D> tape(false);
  std::vector<Var<D>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return fn(tape, vars).value()[0];
}

Tensor<D> random_tensor(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(std::move(dims));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so relu kinks are never straddled by h.
Tensor<D> away_from_zero(Rng& rng, Shape dims) {
  Tensor<D> t(std::move(dims));
  for (auto& v : t.data()) {
    const double mag = rng.uniform(0.05, 1.0);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

// Distinct values 0.01 apart in random order so max-pool winners are stable.
Tensor<D> distinct_values(Rng& rng, Shape dims) {
  Tensor<D> t(std::move(dims));
  std::vector<double> vals(t.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i) - 1.0;
  rng.shuffle(vals.begin(), vals.end());
  std::copy(vals.begin(), vals.end(), t.data().begin());
  return t;
}

std::int64_t irange(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
}

// Contracts an op output with fixed random weights so every output element
// contributes a distinct amount to the checked scalar.
Var<D> contract(Tape<D>& tape, const Var<D>& out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<D> w(out.dims());
  for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
  return sum(tape, mul(tape, out, tape.constant(std::move(w))));
}

struct Case {
  ScalarFn fn;
  std::vector<Tensor<D>> inputs;
};

using CaseGen = std::function<Case(Rng&)>;

struct PoolGeom {
  Shape dims;
  Triple window, stride, pad;
};

PoolGeom random_window_geom(Rng& rng, std::int64_t max_extent) {
  PoolGeom g;
  g.dims = {irange(rng, 1, 2), irange(rng, 1, 2), irange(rng, 1, max_extent),
            irange(rng, 1, max_extent), irange(rng, 1, max_extent)};
  for (int i = 0; i < 3; ++i) {
    const std::int64_t extent = g.dims[2 + i];
    g.window[i] = irange(rng, 1, std::min<std::int64_t>(3, extent + 1));
    g.pad[i] = irange(rng, 0, g.window[i] - 1);
    if (extent + 2 * g.pad[i] < g.window[i]) g.window[i] = extent + 2 * g.pad[i];
    g.pad[i] = std::min(g.pad[i], g.window[i] - 1);
    g.stride[i] = irange(rng, 1, 2);
  }
  return g;
}

std::vector<std::pair<std::string, CaseGen>> op_cases() {
  std::vector<std::pair<std::string, CaseGen>> cases;

  cases.emplace_back("conv3d", [](Rng& rng) {
    const std::int64_t n = irange(rng, 1, 2), c = irange(rng, 1, 3), co = irange(rng, 1, 3);
    Shape xd{n, c, irange(rng, 1, 5), irange(rng, 1, 5), irange(rng, 1, 5)};
    Triple k{}, s{}, p{};
    for (int i = 0; i < 3; ++i) {
      k[i] = irange(rng, 1, 3);
      p[i] = irange(rng, 0, k[i] - 1);
      if (xd[2 + i] + 2 * p[i] < k[i]) k[i] = xd[2 + i] + 2 * p[i];
      s[i] = irange(rng, 1, 2);
    }
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, xd), random_tensor(rng, {co, c, k[0], k[1], k[2]}),
                 random_tensor(rng, {co})};
    cs.fn = [s, p, seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, conv3d(t, v[0], v[1], std::optional<Var<D>>(v[2]), s, p), seed);
    };
    return cs;
  });

  for (auto mode : {PoolMode::kMax, PoolMode::kAvg}) {
    const std::string name = mode == PoolMode::kMax ? "pool3d_max" : "pool3d_avg";
    cases.emplace_back(name, [mode](Rng& rng) {
      const PoolGeom g = random_window_geom(rng, 5);
      const auto seed = rng.next_u64();
      Case cs;
      cs.inputs = {mode == PoolMode::kMax ? distinct_values(rng, g.dims)
                                          : random_tensor(rng, g.dims)};
      cs.fn = [mode, g, seed](Tape<D>& t, const std::vector<Var<D>>& v) {
        return contract(t, pool3d(t, v[0], mode, g.window, g.stride, g.pad), seed);
      };
      return cs;
    });
  }

  cases.emplace_back("global_avg_pool", [](Rng& rng) {
    Shape xd{irange(rng, 1, 3), irange(rng, 1, 3), irange(rng, 1, 3), irange(rng, 1, 4),
             irange(rng, 1, 4)};
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, xd)};
    cs.fn = [seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, global_avg_pool(t, v[0]), seed);
    };
    return cs;
  });

  cases.emplace_back("affine", [](Rng& rng) {
    const std::int64_t n = irange(rng, 1, 4), d = irange(rng, 1, 5), o = irange(rng, 1, 4);
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, {n, d}), random_tensor(rng, {o, d}), random_tensor(rng, {o})};
    cs.fn = [seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, affine(t, v[0], v[1], std::optional<Var<D>>(v[2])), seed);
    };
    return cs;
  });

  for (auto mode : {NormMode::kTrain, NormMode::kEval}) {
    const std::string name = mode == NormMode::kTrain ? "batch_norm3d_train" : "batch_norm3d_eval";
    cases.emplace_back(name, [mode](Rng& rng) {
      const std::int64_t c = irange(rng, 1, 3);
      Shape xd{irange(rng, 1, 3), c, irange(rng, 1, 3), irange(rng, 2, 3), irange(rng, 1, 3)};
      const auto seed = rng.next_u64();
      BatchNormStats<D> stats(c);
      for (auto& v : stats.mean.data()) v = rng.uniform(-0.5, 0.5);
      for (auto& v : stats.var.data()) v = rng.uniform(0.5, 2.0);
      Case cs;
      cs.inputs = {random_tensor(rng, xd), random_tensor(rng, {c}, 0.5, 1.5),
                   random_tensor(rng, {c})};
      cs.fn = [mode, stats, seed](Tape<D>& t, const std::vector<Var<D>>& v) {
        BatchNormStats<D> local = stats;
        return contract(t, batch_norm3d(t, v[0], v[1], v[2], local, mode, 1e-5), seed);
      };
      return cs;
    });
  }

  cases.emplace_back("relu", [](Rng& rng) {
    Shape xd{irange(rng, 1, 4), irange(rng, 1, 6)};
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {away_from_zero(rng, xd)};
    cs.fn = [seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, relu(t, v[0]), seed);
    };
    return cs;
  });

  cases.emplace_back("l2_normalize", [](Rng& rng) {
    Shape xd{irange(rng, 1, 4), irange(rng, 1, 6)};
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {away_from_zero(rng, xd)};
    cs.fn = [seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, l2_normalize(t, v[0]), seed);
    };
    return cs;
  });

  cases.emplace_back("softmax", [](Rng& rng) {
    Shape xd{irange(rng, 1, 4), irange(rng, 1, 6)};
    const double tau = rng.uniform(0.5, 2.0);
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, xd)};
    cs.fn = [tau, seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, softmax(t, v[0], tau), seed);
    };
    return cs;
  });

  cases.emplace_back("cross_entropy_soft", [](Rng& rng) {
    const std::int64_t n = irange(rng, 1, 4), k = irange(rng, 2, 6);
    const double tau = rng.uniform(0.2, 2.0);
    Tensor<D> target({n, k});
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t j = 0; j < k; ++j) s += (target.at({i, j}) = rng.uniform(0.0, 1.0));
      for (std::int64_t j = 0; j < k; ++j) target.at({i, j}) /= s;
    }
    Case cs;
    cs.inputs = {random_tensor(rng, {n, k})};
    cs.fn = [tau, target](Tape<D>& t, const std::vector<Var<D>>& v) {
      return cross_entropy_soft(t, v[0], target, tau);
    };
    return cs;
  });

  cases.emplace_back("logistic_loss", [](Rng& rng) {
    const std::int64_t n = irange(rng, 1, 6);
    std::vector<D> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Case cs;
    cs.inputs = {random_tensor(rng, {n, 1}, -3.0, 3.0)};
    cs.fn = [labels](Tape<D>& t, const std::vector<Var<D>>& v) {
      return logistic_loss(t, v[0], labels);
    };
    return cs;
  });

  cases.emplace_back("add", [](Rng& rng) {
    Shape xd{irange(rng, 1, 3), irange(rng, 1, 4), irange(rng, 1, 3)};
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, xd), random_tensor(rng, xd)};
    cs.fn = [seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, add(t, v[0], v[1]), seed);
    };
    return cs;
  });

  cases.emplace_back("mul", [](Rng& rng) {
    Shape xd{irange(rng, 1, 3), irange(rng, 1, 4)};
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, xd), random_tensor(rng, xd)};
    cs.fn = [seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, mul(t, v[0], v[1]), seed);
    };
    return cs;
  });

  cases.emplace_back("scale", [](Rng& rng) {
    Shape xd{irange(rng, 1, 3), irange(rng, 1, 4)};
    const double f = rng.uniform(-2.0, 2.0);
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, xd)};
    cs.fn = [f, seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, scale(t, v[0], f), seed);
    };
    return cs;
  });

  cases.emplace_back("sum_mean", [](Rng& rng) {
    Shape xd{irange(rng, 1, 3), irange(rng, 1, 4)};
    Case cs;
    cs.inputs = {random_tensor(rng, xd), random_tensor(rng, xd)};
    cs.fn = [](Tape<D>& t, const std::vector<Var<D>>& v) {
      return add(t, sum(t, mul(t, v[0], v[0])), scale(t, mean(t, v[1]), 3.0));
    };
    return cs;
  });

  cases.emplace_back("reshape", [](Rng& rng) {
    const std::int64_t a = irange(rng, 1, 3), b = irange(rng, 1, 3), c = irange(rng, 1, 3);
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, {a, b, c})};
    cs.fn = [a, b, c, seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, reshape(t, v[0], {a * b, c}), seed);
    };
    return cs;
  });

  cases.emplace_back("concat_cols", [](Rng& rng) {
    const std::int64_t n = irange(rng, 1, 3);
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, {n, irange(rng, 1, 3)}),
                 random_tensor(rng, {n, irange(rng, 1, 3)})};
    cs.fn = [seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, concat_cols(t, {v[0], v[1]}), seed);
    };
    return cs;
  });

  cases.emplace_back("slice_rows", [](Rng& rng) {
    const std::int64_t n = irange(rng, 2, 5);
    const std::int64_t b = irange(rng, 0, n - 1);
    const std::int64_t e = irange(rng, b + 1, n);
    const auto seed = rng.next_u64();
    Case cs;
    cs.inputs = {random_tensor(rng, {n, irange(rng, 1, 3)})};
    cs.fn = [b, e, seed](Tape<D>& t, const std::vector<Var<D>>& v) {
      return contract(t, slice_rows(t, v[0], b, e), seed);
    };
    return cs;
  });

  // A miniature of the real model: conv -> bn -> relu -> pool -> heads.
  cases.emplace_back("composite", [](Rng& rng) {
    const std::int64_t n = 2, co = 3, k = 3;
    Shape xd{n, 1, 3, 4, 4};
    const double tau = 0.5;
    Tensor<D> target({n, k});
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < k; ++j) target.at({i, j}) = 1.0 / static_cast<double>(k);
    target.at({0, 0}) += 0.2;
    target.at({0, 1}) -= 0.2;
    Case cs;
    // Redraw until no ReLU input sits close enough to zero for a finite
    // difference step to cross the kink.
    for (int attempt = 0; attempt < 1000; ++attempt) {
      cs.inputs = {random_tensor(rng, xd), random_tensor(rng, {co, 1, 2, 3, 3}),
                   random_tensor(rng, {co}, 0.5, 1.5), random_tensor(rng, {co}),
                   random_tensor(rng, {1, co}), random_tensor(rng, {k, co})};
      Tape<D> probe(false);
      BatchNormStats<D> stats(co);
      auto pre = batch_norm3d(
          probe,
          conv3d(probe, probe.constant(cs.inputs[0]), probe.constant(cs.inputs[1]),
                 std::nullopt, {1, 1, 1}, {0, 1, 1}),
          probe.constant(cs.inputs[2]), probe.constant(cs.inputs[3]), stats,
          NormMode::kTrain, 1e-5);
      double nearest = 1e300;
      for (D x : pre.value().data()) nearest = std::min(nearest, std::abs(x));
      if (nearest > 1e-2) break;
    }
    cs.fn = [target, tau](Tape<D>& t, const std::vector<Var<D>>& v) {
      BatchNormStats<D> stats(v[1].dim(0));
      auto h = conv3d(t, v[0], v[1], std::nullopt, {1, 1, 1}, {0, 1, 1});
      h = batch_norm3d(t, h, v[2], v[3], stats, NormMode::kTrain, 1e-5);
      h = relu(t, h);
      h = pool3d(t, h, PoolMode::kAvg, {1, 2, 2}, {1, 2, 2});
      auto pooled = global_avg_pool(t, h);
      auto logit = affine(t, pooled, v[4], std::nullopt);
      auto cls = logistic_loss(t, logit, std::vector<D>{1.0, 0.0});
      auto z = l2_normalize(t, add(t, pooled, scale(t, pooled, 0.5)));
      auto scores = affine(t, z, v[5], std::nullopt);
      auto swav = cross_entropy_soft(t, scores, target, tau);
      return add(t, cls, swav);
    };
    return cs;
  });

  return cases;
}

}  // namespace

GradCheckReport check_gradients(const ScalarFn& fn,
                                const std::vector<Tensor<D>>& inputs, double h) {
  Tape<D> tape(true);
  std::vector<Var<D>> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  auto loss = fn(tape, vars);
  tape.backward(loss);

  double max_abs = 0.0;
  double scale = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<D> analytic =
        vars[k].grad().empty() ? Tensor<D>(inputs[k].dims()) : vars[k].grad();
    std::vector<Tensor<D>> work = inputs;
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double x0 = inputs[k][i];
      work[k][i] = x0 + h;
      const double fp = eval_scalar(fn, work);
      work[k][i] = x0 - h;
      const double fm = eval_scalar(fn, work);
      work[k][i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      max_abs = std::max(max_abs, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
    }
  }
  GradCheckReport r;
  r.max_abs_error = max_abs;
  r.max_rel_error = scale > 1e-12 ? max_abs / scale : max_abs;
  return r;
}

std::vector<OpCheckResult> run_gradient_suite(std::uint64_t seed, int cases_per_op,
                                              double tolerance) {
  std::vector<OpCheckResult> results;
  for (auto& [name, gen] : op_cases()) {
    OpCheckResult r;
    r.op = name;
    Rng rng(derive_seed(seed, name));
    for (int i = 0; i < cases_per_op; ++i) {
      Case cs = gen(rng);
      const auto rep = check_gradients(cs.fn, cs.inputs);
      r.max_rel_error = std::max(r.max_rel_error, rep.max_rel_error);
      ++r.cases;
    }
    r.passed = r.max_rel_error < tolerance;
    results.push_back(r);
  }
  return results;
}

}  // namespace ebus
