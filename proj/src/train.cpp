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

#include "ebus/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "ebus/error.hpp"
#include "ebus/swav.hpp"

namespace ebus {

void TrainConfig::validate() const {
  if (!(sgd.lr >= 0.0)) throw Error(ErrorCode::kConfig, "lr must be >= 0");
  if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) {
    throw Error(ErrorCode::kConfig, "momentum must lie in [0, 1)");
  }
  if (!(sgd.weight_decay >= 0.0)) throw Error(ErrorCode::kConfig, "weight_decay must be >= 0");
  if (epochs < 0) throw Error(ErrorCode::kConfig, "epochs must be >= 0");
  if (batch_size < 2) throw Error(ErrorCode::kConfig, "batch_size must be at least 2");
  if (eval_batch < 1) throw Error(ErrorCode::kConfig, "eval_batch must be positive");
  if (!(noise_eval_fraction >= 0.0 && noise_eval_fraction <= 1.0)) {
    throw Error(ErrorCode::kConfig, "noise_eval_fraction must lie in [0, 1]");
  }
  views.validate();
}

Var<float> total_loss(Tape<float>& tape, const Var<float>& cls,
                      const std::optional<Var<float>>& swav, double lambda) {
  if (lambda == 0.0 || !swav) return cls;
  return add(tape, cls, scale(tape, *swav, lambda));
}

StepLosses batch_losses(Tape<float>& tape, ModelParams& params,
                        const std::vector<std::vector<Clip>>& views,
                        const std::vector<Label>& labels) {
  const auto& cfg = params.config();
  const auto& sw = params.swav();
  const auto k = static_cast<std::int64_t>(views.size());
  const auto b = static_cast<std::int64_t>(labels.size());
  std::vector<const Clip*> flat;
  std::vector<float> targets;
  for (const auto& view : views) {
    if (static_cast<std::int64_t>(view.size()) != b) {
      throw ShapeError("N", "every view must hold one clip per label");
    }
    for (std::int64_t i = 0; i < b; ++i) {
      flat.push_back(&view[static_cast<std::size_t>(i)]);
      targets.push_back(labels[static_cast<std::size_t>(i)] == Label::kMalignant ? 1.0f : 0.0f);
    }
  }
  auto inputs = clips_to_tensors(flat, cfg.alpha);
  auto out = forward(tape, params, tape.constant(std::move(inputs.slow)),
                     tape.constant(std::move(inputs.fast)), NormMode::kTrain);

  StepLosses losses;
  losses.cls = logistic_loss(tape, out.logit, targets);
  if (sw.swav_weight > 0.0) {
    auto z = project(tape, out.embedding, tape.param(params.get(kProjectionName)));
    auto scores = prototype_scores(tape, z, tape.param(params.get(kPrototypeName)));
    std::vector<Var<float>> per_view;
    std::vector<Tensor<float>> codes;
    for (std::int64_t v = 0; v < k; ++v) {
      per_view.push_back(slice_rows(tape, scores, v * b, (v + 1) * b));
      codes.push_back(sinkhorn_codes(per_view.back().value(), sw.epsilon, sw.sinkhorn_iters));
    }
    losses.swav = swapped_loss(tape, per_view, codes, sw.temperature);
  }
  losses.total = total_loss(tape, losses.cls, losses.swav, sw.swav_weight);
  return losses;
}

EpochStats train_epoch(ModelParams& params, const std::vector<ClipSample>& clips,
                       const NoisePool* pool, const TrainConfig& cfg, int epoch) {
  cfg.validate();
  if (clips.empty()) throw Error(ErrorCode::kValue, "train_epoch: no training clips");
  ViewSpec views = cfg.views;
  views.k_views = params.swav().k_views;
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());
  const std::uint64_t aug_seed = derive_seed(cfg.seed, "augment", static_cast<std::uint64_t>(epoch));

  auto plist = params.parameters();
  EpochStats st;
  st.epoch = epoch;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t first = 0; first < order.size(); first += bs) {
    const std::size_t last = std::min(order.size(), first + bs);
    // A one-clip remainder would give a degenerate Sinkhorn problem.
    if (last - first < 2 && order.size() >= 2) break;
    std::vector<std::vector<Clip>> views_by_index(static_cast<std::size_t>(views.k_views));
    std::vector<Label> labels;
    for (std::size_t i = first; i < last; ++i) {
      const auto& c = clips[order[i]];
      auto vs = make_views(c.frames, views, pool,
                           clip_seed(aug_seed, c.window.case_id, c.window.start));
      for (std::size_t v = 0; v < vs.size(); ++v) views_by_index[v].push_back(std::move(vs[v]));
      labels.push_back(c.window.label);
    }

    Tape<float> tape;
    auto losses = batch_losses(tape, params, views_by_index, labels);
    const double cls = losses.cls.value()[0];
    const double swav = losses.swav ? static_cast<double>(losses.swav->value()[0]) : 0.0;
    const double total = losses.total.value()[0];
    if (!std::isfinite(total) || !std::isfinite(cls) || !std::isfinite(swav)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << epoch << " batch " << st.batches << " (cls=" << cls
          << ", swav=" << swav << ", total=" << total << "; clips";
      for (std::size_t i = first; i < last; ++i) {
        msg << " " << clips[order[i]].window.case_id << "@" << clips[order[i]].window.start;
      }
      msg << ")";
      throw Error(ErrorCode::kNumeric, msg.str());
    }
    zero_grad<float>(plist);
    tape.backward(losses.total);
    sgd_step<float>(plist, cfg.sgd);
    renormalize_prototypes(params.get(kPrototypeName).value);

    st.cls_loss += cls;
    st.swav_loss += swav;
    st.total_loss += total;
    st.batches += 1;
    st.clips += static_cast<std::int64_t>(last - first);
  }
  if (st.batches > 0) {
    st.cls_loss /= static_cast<double>(st.batches);
    st.swav_loss /= static_cast<double>(st.batches);
    st.total_loss /= static_cast<double>(st.batches);
  }
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  st.clips_per_second = st.seconds > 0.0 ? static_cast<double>(st.clips) / st.seconds : 0.0;
  return st;
}

std::vector<EpochStats> train_model(ModelParams& params, const std::vector<ClipSample>& clips,
                                    const NoisePool* pool, const TrainConfig& cfg,
                                    const EpochCallback& on_epoch) {
  std::vector<EpochStats> out;
  for (int e = 0; e < cfg.epochs; ++e) {
    out.push_back(train_epoch(params, clips, pool, cfg, e));
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

namespace {

// Runs the eval-mode network over clips in fixed-size chunks.
template <typename Fn>
void for_each_chunk(ModelParams& params, const std::vector<ClipSample>& clips,
                    std::int64_t batch, Fn&& fn) {
  if (batch < 1) throw Error(ErrorCode::kValue, "batch must be positive");
  const auto bs = static_cast<std::size_t>(batch);
  for (std::size_t first = 0; first < clips.size(); first += bs) {
    const std::size_t last = std::min(clips.size(), first + bs);
    std::vector<const Clip*> ptrs;
    for (std::size_t i = first; i < last; ++i) ptrs.push_back(&clips[i].frames);
    auto inputs = clips_to_tensors(ptrs, params.config().alpha);
    Tape<float> tape(false);
    auto out = forward(tape, params, tape.constant(std::move(inputs.slow)),
                       tape.constant(std::move(inputs.fast)), NormMode::kEval);
    fn(tape, out, first, last);
  }
}

}  // namespace

std::vector<double> predict_clips(ModelParams& params, const std::vector<ClipSample>& clips,
                                  std::int64_t batch) {
  std::vector<double> probs;
  for_each_chunk(params, clips, batch,
                 [&](Tape<float>&, const ForwardOutput& out, std::size_t first, std::size_t last) {
                   for (std::size_t i = 0; i < last - first; ++i) {
                     probs.push_back(classify_prob(out.logit.value()[i]));
                   }
                 });
  return probs;
}

std::vector<CaseScore> score_cases(ModelParams& params, const std::vector<ClipSample>& clips,
                                   std::int64_t batch) {
  const auto probs = predict_clips(params, clips, batch);
  std::map<std::string, std::pair<Label, std::vector<double>>> by_case;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    auto& entry = by_case[clips[i].window.case_id];
    entry.first = clips[i].window.label;
    entry.second.push_back(probs[i]);
  }
  std::vector<CaseScore> out;
  for (auto& [id, entry] : by_case) out.push_back(aggregate_case(id, std::move(entry.second), entry.first));
  return out;
}

CodeDistribution export_code_distribution(ModelParams& params,
                                          const std::vector<ClipSample>& clips,
                                          std::int64_t batch) {
  const auto k = static_cast<std::size_t>(params.swav().k_prototypes);
  CodeDistribution dist{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0)};
  for_each_chunk(params, clips, batch,
                 [&](Tape<float>& tape, const ForwardOutput& out, std::size_t first, std::size_t last) {
                   auto z = project(tape, out.embedding, tape.constant(params.get(kProjectionName).value));
                   auto s = prototype_scores(tape, z, tape.constant(params.get(kPrototypeName).value));
                   auto p = softmax(tape, s, params.swav().temperature);
                   for (std::size_t i = first; i < last; ++i) {
                     auto& row = clips[i].window.label == Label::kMalignant ? dist.malignant : dist.benign;
                     for (std::size_t c = 0; c < k; ++c) {
                       row[c] += p.value().at({static_cast<std::int64_t>(i - first),
                                               static_cast<std::int64_t>(c)});
                     }
                   }
                 });
  for (auto* row : {&dist.benign, &dist.malignant}) {
    double total = 0.0;
    for (double v : *row) total += v;
    if (total > 0.0) {
      for (double& v : *row) v /= total;
    }
  }
  return dist;
}

std::string epoch_stats_csv(const std::vector<EpochStats>& stats) {
  std::string out = "epoch,cls_loss,swav_loss,total_loss,batches,clips,seconds,clips_per_second\n";
  char buf[256];
  for (const auto& s : stats) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%lld,%lld,%.3f,%.2f\n", s.epoch, s.cls_loss,
                  s.swav_loss, s.total_loss, static_cast<long long>(s.batches),
                  static_cast<long long>(s.clips), s.seconds, s.clips_per_second);
    out += buf;
  }
  return out;
}

}  // namespace ebus
