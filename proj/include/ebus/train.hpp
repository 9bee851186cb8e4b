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

#include "ebus/augment.hpp"
#include "ebus/metrics.hpp"
#include "ebus/optim.hpp"
#include "ebus/slowfast.hpp"

namespace ebus {

struct TrainConfig {
  SgdOptions sgd;
  int epochs = 20;
  std::int64_t batch_size = 8;
  std::uint64_t seed = 0;
  ViewSpec views;
  double noise_eval_fraction = 0.5;
  /// Clips per forward pass during prediction.
  std::int64_t eval_batch = 16;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double cls_loss = 0.0;
  double swav_loss = 0.0;
  double total_loss = 0.0;
  std::int64_t batches = 0;
  std::int64_t clips = 0;
  double seconds = 0.0;
  double clips_per_second = 0.0;
};

/// cls + lambda * swav; with lambda == 0 the contrastive term is not touched.
Var<float> total_loss(Tape<float>& tape, const Var<float>& cls,
                      const std::optional<Var<float>>& swav, double lambda);

struct StepLosses {
  Var<float> cls;
  std::optional<Var<float>> swav;
  Var<float> total;
};

/// Forward of one multi-view batch (views[v][i] is view v of clip i) and its
/// losses. Sinkhorn runs only when swav_weight > 0.
StepLosses batch_losses(Tape<float>& tape, ModelParams& params,
                        const std::vector<std::vector<Clip>>& views,
                        const std::vector<Label>& labels);

/// One pass over the clips in an order shuffled by (seed, epoch). Each batch
/// is expanded to K views, forwarded as a single batch, and followed by an
/// SGD step and prototype renormalization. Non-finite losses abort with a
/// kNumeric error naming the batch.
EpochStats train_epoch(ModelParams& params, const std::vector<ClipSample>& clips,
                       const NoisePool* pool, const TrainConfig& cfg, int epoch);

using EpochCallback = std::function<void(const EpochStats&)>;

std::vector<EpochStats> train_model(ModelParams& params, const std::vector<ClipSample>& clips,
                                    const NoisePool* pool, const TrainConfig& cfg,
                                    const EpochCallback& on_epoch = {});

/// Eval-mode malignancy probability for each clip.
std::vector<double> predict_clips(ModelParams& params, const std::vector<ClipSample>& clips,
                                  std::int64_t batch = 16);

/// Case scores for every case id present in `clips`, sorted by case id.
std::vector<CaseScore> score_cases(ModelParams& params, const std::vector<ClipSample>& clips,
                                   std::int64_t batch = 16);

/// Per class, the mean over clips of softmax(prototype scores / tau).
CodeDistribution export_code_distribution(ModelParams& params,
                                          const std::vector<ClipSample>& clips,
                                          std::int64_t batch = 16);

std::string epoch_stats_csv(const std::vector<EpochStats>& stats);

}  // namespace ebus
