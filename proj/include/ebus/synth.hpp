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
#include <vector>

#include "ebus/dataio.hpp"
#include "ebus/rng.hpp"

namespace ebus {

struct SynthSpec {
  std::int64_t cases_per_class = 30;
  std::int64_t frames_per_case = 48;
  std::int64_t image_side = 64;
  double frame_period_s = 0.1;
  std::uint64_t seed = 0;
  std::int64_t noise_pool_size = 237;

  void validate() const;
};

/// Mean over all fully contained window x window patches of the patch
/// variance.
double mean_local_variance(const FrameImage& frame, std::int64_t window = 5);

/// Generated cases keep their mean local variance on the right side of
/// these bounds; a draw that misses is discarded and redrawn.
inline constexpr double kBenignVarianceCeiling = 160.0;
inline constexpr double kMalignantVarianceFloor = 220.0;

/// Frames of one lesion video. Benign: smooth elliptical boundary,
/// homogeneous interior, slow drift. Malignant: lobulated boundary, speckled
/// interior with bright dots that flicker between frames.
std::vector<FrameImage> gen_case_video(Label label, const SynthSpec& spec, Rng& rng);

/// Bright fan of reverberation arcs with speckle on a dark background.
FrameImage gen_noise_image(const SynthSpec& spec, Rng& rng);

struct SynthOutput {
  std::filesystem::path manifest;
  std::filesystem::path noise_dir;
  std::int64_t cases = 0;
  std::int64_t frames = 0;
  std::int64_t noise_images = 0;
};

/// Writes cases/<case_id>/frame_NNNN.pgm and manifest.json under data_dir
/// and noise_NNN.pgm under noise_dir. Case i of a class draws from
/// derive_seed(seed, class, i).
SynthOutput write_synthetic_dataset(const SynthSpec& spec, const std::filesystem::path& data_dir,
                                    const std::filesystem::path& noise_dir);

}  // namespace ebus
