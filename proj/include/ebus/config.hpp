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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ebus/dataio.hpp"
#include "ebus/slowfast.hpp"
#include "ebus/swav.hpp"
#include "ebus/synth.hpp"
#include "ebus/train.hpp"

namespace ebus {

/// Flat run configuration. Every key can be set in the JSON file or with a
/// --key=value override; unknown keys are rejected.
struct RunConfig {
  std::string output_dir = "runs/default";
  std::string preset = "tiny";
  std::string model_name = "slowfast_swav";
  std::uint64_t seed = 0;
  bool deterministic = true;
  bool untrained = false;

  // synthetic data
  std::int64_t cases_per_class = 30;
  std::int64_t frames_per_case = 48;
  std::int64_t image_side = 64;
  std::int64_t noise_pool_size = 237;
  double frame_period_s = 0.1;

  // sampling and split; 0 picks the preset value
  double split_ratio = 2.0 / 3.0;
  std::int64_t crop_side = 0;
  std::int64_t out_side = 0;

  // model
  bool single_pathway = false;

  // contrastive head
  std::int64_t k_prototypes = 16;
  std::int64_t proj_dim = 32;
  double epsilon = 0.05;
  std::int64_t sinkhorn_iters = 3;
  double temperature = 0.1;
  std::int64_t k_views = 2;
  double swav_weight = 1.0;

  // augmentation
  double flip_p = 0.5;
  double cutmix_p = 1.0;
  double radius_lo = 0.25;
  double radius_hi = 0.5;

  // optimization and evaluation
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::int64_t epochs = 20;
  std::int64_t batch_size = 8;
  std::int64_t eval_batch = 16;
  double noise_eval_fraction = 0.5;

  /// Applies one key from text (JSON literal syntax for strings is not
  /// required: --preset=tiny and --preset="tiny" are both accepted).
  void set(std::string_view key, std::string_view value);

  void validate() const;

  SamplingConfig sampling() const;
  SlowFastConfig model() const;
  SwavConfig swav() const;
  SynthSpec synth() const;
  TrainConfig train() const;

  std::filesystem::path data_dir() const { return std::filesystem::path(output_dir) / "data"; }
  std::filesystem::path noise_dir() const { return std::filesystem::path(output_dir) / "noise"; }
  std::filesystem::path manifest_path() const { return data_dir() / "manifest.json"; }
  std::filesystem::path checkpoint_path() const {
    return std::filesystem::path(output_dir) / "checkpoint.ebds";
  }
};

std::vector<std::string> run_config_keys();

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ebus
