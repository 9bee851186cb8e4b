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
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ebus/tensor.hpp"

namespace ebus {

enum class Label { kBenign = 0, kMalignant = 1 };

/// "benign" or "malignant".
const char* label_name(Label label);
/// Exact, lower-case match only.
Label parse_label(std::string_view text);

/// 8-bit grayscale frame, row-major.
struct FrameImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;

  FrameImage() = default;
  FrameImage(std::int64_t w, std::int64_t h, std::uint8_t fill = 0);

  std::uint8_t& at(std::int64_t x, std::int64_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::int64_t x, std::int64_t y) const {
    return pixels[y * width + x];
  }
  bool operator==(const FrameImage&) const = default;
};

/// Binary PGM (P5, maxval 255). Errors carry the byte offset.
FrameImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const FrameImage& image);
FrameImage read_pgm(const std::filesystem::path& path);
void write_pgm(const FrameImage& image, const std::filesystem::path& path);

struct CaseRecord {
  std::string case_id;
  Label label = Label::kBenign;
  std::vector<std::filesystem::path> frame_paths;
  double frame_period_s = 0.1;
};

/// One manifest entry as stored on disk. frame_pattern is a glob over file
/// names in frame_dir ('*' and '?' only); frame_dir is relative to the
/// manifest.
struct ManifestEntry {
  std::string case_id;
  Label label = Label::kBenign;
  std::string frame_dir;
  std::string frame_pattern;
  double frame_period_s = 0.1;
};

bool glob_match(std::string_view pattern, std::string_view name);

std::vector<CaseRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

struct SamplingConfig {
  double fast_period_s = 0.1;
  std::int64_t slow_stride = 4;
  std::int64_t clip_fast_len = 32;
  std::int64_t clip_slow_len = 8;
  double overlap_fraction = 0.5;
  std::int64_t crop_side = 960;
  std::int64_t out_side = 224;

  static SamplingConfig paper();
  /// 16 fast / 4 slow frames (1.6 s clips, 0.8 s stride) on 64-pixel frames.
  static SamplingConfig tiny();

  void validate() const;
  /// Fast frames between consecutive window starts.
  std::int64_t window_stride() const;
};

/// A clip on the fast timeline. fast_indices are fast-timeline positions;
/// fast_frames are the stored frames they map to (identical when the stored
/// period equals the fast period).
struct ClipWindow {
  std::string case_id;
  Label label = Label::kBenign;
  std::int64_t start = 0;
  std::vector<std::int64_t> fast_indices;
  std::vector<std::int64_t> slow_indices;
  std::vector<std::int64_t> fast_frames;
  std::vector<std::int64_t> slow_frames;
};

/// Window start positions on a fast timeline of the given length.
std::vector<std::int64_t> window_starts(std::int64_t fast_len,
                                        const SamplingConfig& cfg);

/// Number of fast-timeline positions covered by a stored stream.
std::int64_t fast_timeline_length(std::int64_t stored_frames,
                                  double frame_period_s,
                                  const SamplingConfig& cfg);

std::vector<ClipWindow> enumerate_clips(const CaseRecord& record,
                                        const SamplingConfig& cfg);

/// (row, column) of the top-left corner of a centered side x side crop.
std::pair<std::int64_t, std::int64_t> center_crop_offsets(std::int64_t height,
                                                          std::int64_t width,
                                                          std::int64_t side);

/// Reflect-pad to at least crop_side, center crop, then area-average
/// resample to out_side.
FrameImage crop_resize(const FrameImage& frame, const SamplingConfig& cfg);

struct DatasetSplit {
  std::vector<CaseRecord> train;
  std::vector<CaseRecord> val;
};

/// Per class: sort by case_id, seeded shuffle, first floor(ratio * n) cases
/// train and the rest validation. Both lists come back sorted by case_id.
DatasetSplit split_cases(std::vector<CaseRecord> cases, double ratio,
                         std::uint64_t seed);

/// Frames of a clip on the fast timeline, one image per fast index.
using Clip = std::vector<FrameImage>;

/// A case with all stored frames decoded and preprocessed.
struct CaseFrames {
  CaseRecord record;
  std::vector<FrameImage> frames;
};

CaseFrames load_case_frames(const CaseRecord& record, const SamplingConfig& cfg);

struct ClipSample {
  ClipWindow window;
  Clip frames;
};

std::vector<ClipSample> materialize_clips(const CaseFrames& frames,
                                          const SamplingConfig& cfg);

struct PathwayInputs {
  Tensor<float> slow;  // [N,1,Tf/stride,S,S]
  Tensor<float> fast;  // [N,1,Tf,S,S]
};

/// Stacks clips into network inputs scaled to [0, 1]; the slow pathway takes
/// every stride-th fast frame.
PathwayInputs clips_to_tensors(std::span<const Clip* const> clips,
                               std::int64_t slow_stride);

}  // namespace ebus
