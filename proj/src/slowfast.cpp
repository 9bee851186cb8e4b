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

#include "ebus/slowfast.hpp"

#include <cmath>

#include "ebus/error.hpp"
#include "ebus/rng.hpp"

namespace ebus {

SlowFastConfig SlowFastConfig::paper() { return SlowFastConfig{}; }

SlowFastConfig SlowFastConfig::tiny() {
  SlowFastConfig c;
  c.stage_blocks = {1, 1, 1, 1};
  c.base_channels = 8;
  c.slow_frames = 4;
  c.side = 64;
  return c;
}

void SlowFastConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, m); };
  if (alpha < 1) fail("alpha must be >= 1");
  if (!(beta > 0.0 && beta <= 1.0)) fail("beta must lie in (0, 1]");
  if (base_channels < 1 || slow_frames < 1 || side < 1) {
    fail("base_channels, slow_frames and side must be positive");
  }
  if (stage_blocks.empty()) fail("stage_blocks must not be empty");
  for (auto b : stage_blocks) {
    if (b < 1) fail("every stage needs at least one block");
  }
  if (fusion_kernel_t < 1 || fusion_kernel_t % 2 == 0) fail("fusion_kernel_t must be odd");
  if (!single_pathway) {
    const double fb = static_cast<double>(base_channels) * beta;
    if (fb < 1.0 || std::abs(fb - std::round(fb)) > 1e-9) {
      fail("beta * base_channels must be a positive integer");
    }
  }
}

std::int64_t SlowFastConfig::fast_base() const {
  return static_cast<std::int64_t>(std::llround(static_cast<double>(base_channels) * beta));
}

std::int64_t SlowFastConfig::stage_width(std::size_t stage) const {
  return base_channels << stage;
}

std::int64_t SlowFastConfig::fast_out(std::size_t stage) const {
  return 4 * (fast_base() << stage);
}

std::int64_t SlowFastConfig::embed_dim() const {
  const std::size_t last = stage_blocks.size() - 1;
  return slow_out(last) + (single_pathway ? 0 : fast_out(last));
}

// -------------------------------------------------------------- params

ModelParams::ModelParams(SlowFastConfig cfg, SwavConfig swav)
    : cfg_(std::move(cfg)), swav_(swav) {}

Parameter<float>& ModelParams::add(const std::string& name, Tensor<float> value) {
  if (index_.count(name) || norm_index_.count(name)) {
    throw Error(ErrorCode::kValue, "duplicate parameter name '" + name + "'");
  }
  index_[name] = params_.size();
  params_.push_back(std::make_unique<Parameter<float>>(name, std::move(value)));
  return *params_.back();
}

Parameter<float>& ModelParams::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::kValue, "no parameter named '" + name + "'");
  return *params_[it->second];
}

const Parameter<float>& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::kValue, "no parameter named '" + name + "'");
  return *params_[it->second];
}

BatchNormStats<float>& ModelParams::add_norm(const std::string& name, std::int64_t channels) {
  if (norm_index_.count(name)) throw Error(ErrorCode::kValue, "duplicate norm '" + name + "'");
  norm_index_[name] = norms_.size();
  norms_.emplace_back(name, std::make_unique<BatchNormStats<float>>(channels));
  return *norms_.back().second;
}

BatchNormStats<float>& ModelParams::norm_stats(const std::string& name) {
  auto it = norm_index_.find(name);
  if (it == norm_index_.end()) throw Error(ErrorCode::kValue, "no norm named '" + name + "'");
  return *norms_[it->second].second;
}

std::vector<Parameter<float>*> ModelParams::parameters() {
  std::vector<Parameter<float>*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<std::pair<std::string, Tensor<float>*>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor<float>*>> out;
  for (auto& p : params_) out.emplace_back(p->name, &p->value);
  for (auto& [name, stats] : norms_) {
    out.emplace_back(name + ".running_mean", &stats->mean);
    out.emplace_back(name + ".running_var", &stats->var);
  }
  return out;
}

std::int64_t ModelParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p->value.numel();
  return n;
}

namespace {

class Builder {
 public:
  Builder(ModelParams& m, std::uint64_t seed) : m_(m), seed_(seed) {}

  void he(const std::string& name, Shape dims, std::int64_t fan_in) {
    Tensor<float> t(dims);
    Rng rng(derive_seed(seed_, name));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    m_.add(name, std::move(t));
  }

  void conv(const std::string& name, std::int64_t out, std::int64_t in, Triple k) {
    he(name, {out, in, k[0], k[1], k[2]}, in * k[0] * k[1] * k[2]);
  }

  void norm(const std::string& name, std::int64_t channels) {
    m_.add(name + ".scale", Tensor<float>({channels}, 1.0f));
    m_.add(name + ".shift", Tensor<float>({channels}, 0.0f));
    m_.add_norm(name, channels);
  }

  void pathway(const std::string& path, std::int64_t base, bool slow) {
    const auto& cfg = m_.config();
    const std::int64_t stem_kt = slow ? 1 : 5;
    conv(path + ".stem.conv", base, 1, {stem_kt, 7, 7});
    norm(path + ".stem.bn", base);
    std::int64_t in = base;
    for (std::size_t s = 0; s < cfg.stage_blocks.size(); ++s) {
      const std::int64_t width = base << s;
      const std::int64_t out = 4 * width;
      const std::int64_t kt = slow ? cfg.slow_temporal_kernel(s) : 3;
      for (std::int64_t b = 0; b < cfg.stage_blocks[s]; ++b) {
        const std::string p = path + ".s" + std::to_string(s) + ".b" + std::to_string(b);
        conv(p + ".conv_a", width, in, {kt, 1, 1});
        norm(p + ".bn_a", width);
        conv(p + ".conv_b", width, width, {1, 3, 3});
        norm(p + ".bn_b", width);
        conv(p + ".conv_c", out, width, {1, 1, 1});
        norm(p + ".bn_c", out);
        const bool downsample = b == 0 && s > 0;
        if (in != out || downsample) {
          conv(p + ".shortcut", out, in, {1, 1, 1});
          norm(p + ".shortcut_bn", out);
        }
        in = out;
      }
    }
  }

  void fusion(const std::string& name, std::int64_t slow_ch, std::int64_t fast_ch) {
    conv(name + ".weight", slow_ch, fast_ch, {m_.config().fusion_kernel_t, 1, 1});
    m_.add(name + ".bias", Tensor<float>({slow_ch}, 0.0f));
  }

 private:
  ModelParams& m_;
  std::uint64_t seed_;
};

}  // namespace

std::unique_ptr<ModelParams> init_params(const SlowFastConfig& cfg, const SwavConfig& swav,
                                         std::uint64_t seed) {
  cfg.validate();
  swav.validate();
  auto m = std::make_unique<ModelParams>(cfg, swav);
  Builder b(*m, seed);
  b.pathway("slow", cfg.base_channels, true);
  if (!cfg.single_pathway) {
    b.pathway("fast", cfg.fast_base(), false);
    b.fusion("fuse.stem", cfg.base_channels, cfg.fast_base());
    for (std::size_t s = 0; s < cfg.stage_blocks.size(); ++s) {
      b.fusion("fuse.s" + std::to_string(s), cfg.slow_out(s), cfg.fast_out(s));
    }
  }
  const std::int64_t e = cfg.embed_dim();
  b.he("head.cls.weight", {1, e}, e);
  m->add("head.cls.bias", Tensor<float>({1}, 0.0f));
  b.he(kProjectionName, {swav.proj_dim, e}, e);

  Tensor<float> bank({swav.k_prototypes, swav.proj_dim});
  Rng rng(derive_seed(seed, kPrototypeName));
  for (float& v : bank.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  renormalize_prototypes(bank);
  m->add(kPrototypeName, std::move(bank));
  return m;
}

// ------------------------------------------------------------- forward

Var<float> lateral_fuse(Tape<float>& tape, const Var<float>& fast_feat,
                        const Var<float>& slow_feat, const Var<float>& kernel,
                        const Var<float>& bias, std::int64_t alpha) {
  const auto& f = fast_feat.dims();
  const auto& s = slow_feat.dims();
  if (f.size() != 5 || s.size() != 5) throw ShapeError("rank", "lateral_fuse expects 5-D features");
  if (f[0] != s[0]) throw ShapeError("N", "lateral_fuse batch mismatch");
  if (f[2] != alpha * s[2]) {
    throw ShapeError("T", "fast temporal extent " + std::to_string(f[2]) + " is not alpha=" +
                              std::to_string(alpha) + " times slow extent " + std::to_string(s[2]));
  }
  if (f[3] != s[3]) throw ShapeError("H", "lateral_fuse spatial mismatch");
  if (f[4] != s[4]) throw ShapeError("W", "lateral_fuse spatial mismatch");
  const std::int64_t kt = kernel.dim(2);
  auto inc = conv3d(tape, fast_feat, kernel, bias, {alpha, 1, 1}, {kt / 2, 0, 0});
  if (inc.dims() != s) {
    throw ShapeError("C", "fused features " + shape_str(inc.dims()) + " do not match slow " +
                              shape_str(s));
  }
  return add(tape, slow_feat, inc);
}

namespace {

struct Net {
  Tape<float>& tape;
  ModelParams& m;
  NormMode mode;

  Var<float> p(const std::string& name) { return tape.param(m.get(name)); }

  Var<float> bn(const Var<float>& x, const std::string& name) {
    return batch_norm3d(tape, x, p(name + ".scale"), p(name + ".shift"), m.norm_stats(name), mode);
  }

  Var<float> conv(const Var<float>& x, const std::string& name, Triple stride, Triple pad) {
    return conv3d(tape, x, p(name), std::nullopt, stride, pad);
  }

  Var<float> stem(const Var<float>& x, const std::string& path) {
    const std::int64_t kt = m.get(path + ".stem.conv").value.dim(2);
    auto h = relu(tape, bn(conv(x, path + ".stem.conv", {1, 2, 2}, {kt / 2, 3, 3}), path + ".stem.bn"));
    return pool3d(tape, h, PoolMode::kMax, {1, 3, 3}, {1, 2, 2}, {0, 1, 1});
  }

  Var<float> block(const Var<float>& x, const std::string& p, std::int64_t stride) {
    const std::int64_t kt = m.get(p + ".conv_a").value.dim(2);
    auto a = relu(tape, bn(conv(x, p + ".conv_a", {1, 1, 1}, {kt / 2, 0, 0}), p + ".bn_a"));
    auto b = relu(tape, bn(conv(a, p + ".conv_b", {1, stride, stride}, {0, 1, 1}), p + ".bn_b"));
    auto c = bn(conv(b, p + ".conv_c", {1, 1, 1}, {0, 0, 0}), p + ".bn_c");
    Var<float> sc = x;
    if (m.has(p + ".shortcut")) {
      sc = bn(conv(x, p + ".shortcut", {1, stride, stride}, {0, 0, 0}), p + ".shortcut_bn");
    }
    return relu(tape, add(tape, c, sc));
  }

  Var<float> stage(Var<float> x, const std::string& path, std::size_t s) {
    const auto& cfg = m.config();
    for (std::int64_t b = 0; b < cfg.stage_blocks[s]; ++b) {
      const std::int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      x = block(x, path + ".s" + std::to_string(s) + ".b" + std::to_string(b), stride);
    }
    return x;
  }
};

void check_clip(const Var<float>& clip, std::int64_t frames, const SlowFastConfig& cfg,
                const char* which) {
  const auto& d = clip.dims();
  if (d.size() != 5) throw ShapeError("rank", std::string(which) + " clip must be [N,1,T,S,S]");
  if (d[1] != 1) throw ShapeError("C", std::string(which) + " clip must have one channel");
  if (d[2] != frames) {
    throw ShapeError("T", std::string(which) + " clip has " + std::to_string(d[2]) +
                              " frames, expected " + std::to_string(frames));
  }
  if (d[3] != cfg.side || d[4] != cfg.side) {
    throw ShapeError("HW", std::string(which) + " clip side does not match config");
  }
}

}  // namespace

ForwardOutput forward(Tape<float>& tape, ModelParams& params, const Var<float>& slow_clip,
                      const Var<float>& fast_clip, NormMode mode, std::vector<StageShape>* trace) {
  const auto& cfg = params.config();
  check_clip(slow_clip, cfg.slow_frames, cfg, "slow");
  Net net{tape, params, mode};

  auto record = [&](const std::string& point, const Var<float>& s, const Var<float>* f) {
    if (trace) trace->push_back({point, s.dims(), f ? f->dims() : Shape{}});
  };

  Var<float> slow = net.stem(slow_clip, "slow");
  Var<float> pooled;
  if (cfg.single_pathway) {
    record("stem", slow, nullptr);
    for (std::size_t s = 0; s < cfg.stage_blocks.size(); ++s) {
      slow = net.stage(slow, "slow", s);
      record("s" + std::to_string(s), slow, nullptr);
    }
    pooled = global_avg_pool(tape, slow);
  } else {
    if (fast_clip.dims().size() != 5 || fast_clip.dim(0) != slow_clip.dim(0)) {
      throw ShapeError("N", "fast clip batch does not match slow clip");
    }
    if (fast_clip.dim(2) != cfg.alpha * slow_clip.dim(2)) {
      throw ShapeError("T", "fast/slow frame ratio must equal alpha=" + std::to_string(cfg.alpha));
    }
    check_clip(fast_clip, cfg.fast_frames(), cfg, "fast");
    Var<float> fast = net.stem(fast_clip, "fast");
    auto fuse = [&](const std::string& name) {
      record(name, slow, &fast);
      slow = lateral_fuse(tape, fast, slow, net.p("fuse." + name + ".weight"),
                          net.p("fuse." + name + ".bias"), cfg.alpha);
    };
    fuse("stem");
    for (std::size_t s = 0; s < cfg.stage_blocks.size(); ++s) {
      slow = net.stage(slow, "slow", s);
      fast = net.stage(fast, "fast", s);
      fuse("s" + std::to_string(s));
    }
    pooled = concat_cols(tape, {global_avg_pool(tape, slow), global_avg_pool(tape, fast)});
  }
  ForwardOutput out;
  out.embedding = pooled;
  out.logit = affine(tape, pooled, net.p("head.cls.weight"), net.p("head.cls.bias"));
  return out;
}

double classify_prob(double logit) {
  if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

}  // namespace ebus
