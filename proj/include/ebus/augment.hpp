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
#include <optional>
#include <string_view>
#include <vector>

#include "ebus/dataio.hpp"
#include "ebus/rng.hpp"

namespace ebus {

struct NoisePool {
  std::vector<FrameImage> images;
};

/// Every *.pgm file in `dir`, in file-name order, preprocessed like frames.
NoisePool load_noise_pool(const std::filesystem::path& dir, const SamplingConfig& cfg);

enum class Corner { kTopLeft, kTopRight, kBottomLeft, kBottomRight };

const char* corner_name(Corner corner);

/// Quarter disc anchored at the corner pixel of a frame.
struct CornerSector {
  Corner corner = Corner::kTopLeft;
  double radius = 0.0;
};

/// True when (x, y) lies strictly within `radius` (Euclidean, in pixel
/// indices) of the sector's corner pixel.
bool in_sector(const CornerSector& sector, std::int64_t x, std::int64_t y,
               std::int64_t width, std::int64_t height);

/// Corner uniform over the four; radius uniform in [lo, hi] * min(W, H).
CornerSector draw_sector(Rng& rng, std::int64_t width, std::int64_t height,
                         double lo = 0.25, double hi = 0.5);

/// Mirror every frame: (x, y) -> (W - 1 - x, y).
Clip hflip(const Clip& clip);
/// One Bernoulli(p) draw decides for the whole clip.
Clip hflip_clip(const Clip& clip, double p, Rng& rng);

/// Replaces the sector of every frame with the same pixels of `noise`.
Clip apply_cutmix(const Clip& clip, const FrameImage& noise, const CornerSector& sector);

struct CutmixDraw {
  std::size_t noise_index = 0;
  CornerSector sector;
};

/// Draws one pool image for the clip and applies the sector. The draw is
/// written to `draw` when given.
Clip noise_cutmix_clip(const Clip& clip, const NoisePool& pool, const CornerSector& sector,
                       Rng& rng, CutmixDraw* draw = nullptr);

struct ViewSpec {
  int k_views = 2;
  double flip_p = 0.5;
  double cutmix_p = 1.0;
  double radius_lo = 0.25;
  double radius_hi = 0.5;

  void validate() const;
};

/// Seed for the augmentation stream of one clip, independent of visit order.
std::uint64_t clip_seed(std::uint64_t master, std::string_view case_id, std::int64_t start);

/// K views: view 0 is flip only; views 1..K-1 also get Noise CutMix with
/// probability cutmix_p. View v draws from Rng(derive_seed(seed, "view", v)).
std::vector<Clip> make_views(const Clip& clip, const ViewSpec& spec, const NoisePool* pool,
                             std::uint64_t seed);

struct NoiseEvalSet {
  std::vector<ClipSample> clips;
  /// Per clip: the CutMix draw that was applied, if any.
  std::vector<std::optional<CutmixDraw>> applied;
};

/// Applies Noise CutMix to round(fraction * n) clips chosen by a seeded
/// shuffle of the clips sorted by (case_id, start). Clip order is preserved.
NoiseEvalSet build_noise_eval_set(std::vector<ClipSample> clips, const NoisePool& pool,
                                  double fraction, std::uint64_t seed, double radius_lo = 0.25,
                                  double radius_hi = 0.5);

}  // namespace ebus
