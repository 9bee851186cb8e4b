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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ebus/ops.hpp"
#include "ebus/swav.hpp"

namespace ebus {

struct SlowFastConfig {
  std::int64_t alpha = 4;
  double beta = 0.125;
  std::vector<std::int64_t> stage_blocks{3, 4, 6, 3};
  std::int64_t base_channels = 64;
  std::int64_t fusion_kernel_t = 5;
  std::int64_t slow_frames = 8;
  std::int64_t side = 224;
  bool single_pathway = false;

  static SlowFastConfig paper();
  /// base 8, one block per stage, 64-pixel frames, 4 slow / 16 fast frames.
  static SlowFastConfig tiny();

  void validate() const;
  std::int64_t fast_frames() const { return alpha * slow_frames; }
  std::int64_t fast_base() const;
  std::int64_t stage_width(std::size_t stage) const;
  std::int64_t slow_out(std::size_t stage) const { return 4 * stage_width(stage); }
  std::int64_t fast_out(std::size_t stage) const;
  /// Temporal kernel of the first bottleneck conv in a slow stage.
  std::int64_t slow_temporal_kernel(std::size_t stage) const { return stage < 2 ? 1 : 3; }
  std::int64_t embed_dim() const;
};

/// Learnable arrays of the network, its heads and the prototype bank, plus
/// batch-norm running statistics. Parameters have stable addresses.
class ModelParams {
 public:
  ModelParams(SlowFastConfig cfg, SwavConfig swav);
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;

  const SlowFastConfig& config() const { return cfg_; }
  const SwavConfig& swav() const { return swav_; }

  Parameter<float>& add(const std::string& name, Tensor<float> value);
  Parameter<float>& get(const std::string& name);
  const Parameter<float>& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  BatchNormStats<float>& add_norm(const std::string& name, std::int64_t channels);
  BatchNormStats<float>& norm_stats(const std::string& name);

  std::vector<Parameter<float>*> parameters();
  /// Learnable parameters followed by running statistics
  /// ("<norm>.running_mean", "<norm>.running_var"), in registration order.
  std::vector<std::pair<std::string, Tensor<float>*>> named_tensors();
  std::int64_t parameter_count() const;

 private:
  SlowFastConfig cfg_;
  SwavConfig swav_;
  std::vector<std::unique_ptr<Parameter<float>>> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, std::unique_ptr<BatchNormStats<float>>>> norms_;
  std::map<std::string, std::size_t> norm_index_;
};

inline constexpr const char* kPrototypeName = "swav.prototypes";
inline constexpr const char* kProjectionName = "swav.proj.weight";

/// He-uniform conv/affine weights (bound sqrt(6 / fan_in)), unit norm scales,
/// zero shifts and biases, unit-norm prototype rows. Each tensor draws from
/// its own stream keyed on (seed, name).
std::unique_ptr<ModelParams> init_params(const SlowFastConfig& cfg, const SwavConfig& swav,
                                         std::uint64_t seed);

/// Adds a (kt,1,1) conv with temporal stride alpha of the fast features to
/// the slow features.
Var<float> lateral_fuse(Tape<float>& tape, const Var<float>& fast_feat,
                        const Var<float>& slow_feat, const Var<float>& kernel,
                        const Var<float>& bias, std::int64_t alpha);

struct ForwardOutput {
  Var<float> logit;      // [N, 1]
  Var<float> embedding;  // [N, embed_dim]
};

/// Feature shapes at one fusion point (fast is empty for single pathway).
struct StageShape {
  std::string point;
  Shape slow;
  Shape fast;
};

ForwardOutput forward(Tape<float>& tape, ModelParams& params, const Var<float>& slow_clip,
                      const Var<float>& fast_clip, NormMode mode,
                      std::vector<StageShape>* trace = nullptr);

/// Numerically stable logistic function.
double classify_prob(double logit);

}  // namespace ebus
