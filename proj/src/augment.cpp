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

#include "ebus/augment.hpp"

#include <algorithm>
#include <cmath>

#include "ebus/error.hpp"

namespace ebus {

namespace fs = std::filesystem;

NoisePool load_noise_pool(const fs::path& dir, const SamplingConfig& cfg) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->is_regular_file() && it->path().extension() == ".pgm") files.push_back(it->path());
  }
  if (ec) throw Error(ErrorCode::kIo, "cannot list noise pool " + dir.string());
  std::sort(files.begin(), files.end());
  NoisePool pool;
  for (const auto& f : files) pool.images.push_back(crop_resize(read_pgm(f), cfg));
  if (pool.images.empty()) {
    throw Error(ErrorCode::kValue, "noise pool " + dir.string() + " has no .pgm images");
  }
  return pool;
}

const char* corner_name(Corner corner) {
  switch (corner) {
    case Corner::kTopLeft: return "TL";
    case Corner::kTopRight: return "TR";
    case Corner::kBottomLeft: return "BL";
    case Corner::kBottomRight: return "BR";
  }
  return "?";
}

bool in_sector(const CornerSector& s, std::int64_t x, std::int64_t y, std::int64_t width,
               std::int64_t height) {
  const bool right = s.corner == Corner::kTopRight || s.corner == Corner::kBottomRight;
  const bool bottom = s.corner == Corner::kBottomLeft || s.corner == Corner::kBottomRight;
  const double dx = static_cast<double>(right ? (width - 1 - x) : x);
  const double dy = static_cast<double>(bottom ? (height - 1 - y) : y);
  return dx * dx + dy * dy < s.radius * s.radius;
}

CornerSector draw_sector(Rng& rng, std::int64_t width, std::int64_t height, double lo,
                         double hi) {
  if (!(lo >= 0.0 && lo <= hi)) {
    throw Error(ErrorCode::kValue, "radius range must satisfy 0 <= lo <= hi");
  }
  CornerSector s;
  s.corner = static_cast<Corner>(rng.uniform_int(4));
  s.radius = rng.uniform(lo, hi) * static_cast<double>(std::min(width, height));
  return s;
}

Clip hflip(const Clip& clip) {
  Clip out = clip;
  for (auto& f : out) {
    for (std::int64_t y = 0; y < f.height; ++y) {
      auto row = f.pixels.begin() + y * f.width;
      std::reverse(row, row + f.width);
    }
  }
  return out;
}

Clip hflip_clip(const Clip& clip, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kValue, "flip probability outside [0, 1]");
  return rng.bernoulli(p) ? hflip(clip) : clip;
}

Clip apply_cutmix(const Clip& clip, const FrameImage& noise, const CornerSector& sector) {
  if (!(sector.radius >= 0.0)) throw Error(ErrorCode::kValue, "sector radius must be >= 0");
  Clip out = clip;
  for (auto& f : out) {
    if (f.width != noise.width || f.height != noise.height) {
      throw ShapeError("HW", "noise image " + std::to_string(noise.width) + "x" +
                                 std::to_string(noise.height) + " does not match frame " +
                                 std::to_string(f.width) + "x" + std::to_string(f.height));
    }
    // Only the bounding square of the disc can be touched.
    const auto reach = std::min<std::int64_t>(static_cast<std::int64_t>(std::ceil(sector.radius)),
                                              std::max(f.width, f.height));
    const bool right = sector.corner == Corner::kTopRight || sector.corner == Corner::kBottomRight;
    const bool bottom =
        sector.corner == Corner::kBottomLeft || sector.corner == Corner::kBottomRight;
    const std::int64_t x0 = right ? std::max<std::int64_t>(0, f.width - reach) : 0;
    const std::int64_t x1 = right ? f.width : std::min(f.width, reach);
    const std::int64_t y0 = bottom ? std::max<std::int64_t>(0, f.height - reach) : 0;
    const std::int64_t y1 = bottom ? f.height : std::min(f.height, reach);
    for (std::int64_t y = y0; y < y1; ++y) {
      for (std::int64_t x = x0; x < x1; ++x) {
        if (in_sector(sector, x, y, f.width, f.height)) f.at(x, y) = noise.at(x, y);
      }
    }
  }
  return out;
}

Clip noise_cutmix_clip(const Clip& clip, const NoisePool& pool, const CornerSector& sector,
                       Rng& rng, CutmixDraw* draw) {
  if (pool.images.empty()) throw Error(ErrorCode::kValue, "noise pool is empty");
  const auto idx = static_cast<std::size_t>(rng.uniform_int(pool.images.size()));
  if (draw) *draw = CutmixDraw{idx, sector};
  return apply_cutmix(clip, pool.images[idx], sector);
}

void ViewSpec::validate() const {
  if (k_views < 2) throw Error(ErrorCode::kConfig, "k_views must be at least 2");
  if (!(flip_p >= 0.0 && flip_p <= 1.0) || !(cutmix_p >= 0.0 && cutmix_p <= 1.0)) {
    throw Error(ErrorCode::kConfig, "augmentation probabilities must lie in [0, 1]");
  }
  if (!(radius_lo >= 0.0 && radius_lo <= radius_hi)) {
    throw Error(ErrorCode::kConfig, "radius range must satisfy 0 <= lo <= hi");
  }
}

std::uint64_t clip_seed(std::uint64_t master, std::string_view case_id, std::int64_t start) {
  return derive_seed(master, case_id, static_cast<std::uint64_t>(start));
}

std::vector<Clip> make_views(const Clip& clip, const ViewSpec& spec, const NoisePool* pool,
                             std::uint64_t seed) {
  spec.validate();
  std::vector<Clip> views;
  views.reserve(static_cast<std::size_t>(spec.k_views));
  for (int v = 0; v < spec.k_views; ++v) {
    Rng rng(derive_seed(seed, "view", static_cast<std::uint64_t>(v)));
    Clip out = hflip_clip(clip, spec.flip_p, rng);
    if (v > 0 && rng.bernoulli(spec.cutmix_p) && !out.empty()) {
      if (!pool) throw Error(ErrorCode::kValue, "noise pool is empty");
      auto sector = draw_sector(rng, out[0].width, out[0].height, spec.radius_lo, spec.radius_hi);
      out = noise_cutmix_clip(out, *pool, sector, rng);
    }
    views.push_back(std::move(out));
  }
  return views;
}

NoiseEvalSet build_noise_eval_set(std::vector<ClipSample> clips, const NoisePool& pool,
                                  double fraction, std::uint64_t seed, double radius_lo,
                                  double radius_hi) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kValue, "noise fraction must lie in [0, 1]");
  }
  const std::size_t n = clips.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& wa = clips[a].window;
    const auto& wb = clips[b].window;
    if (wa.case_id != wb.case_id) return wa.case_id < wb.case_id;
    return wa.start < wb.start;
  });
  Rng rng(derive_seed(seed, "noise-eval"));
  rng.shuffle(order.begin(), order.end());
  const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

  NoiseEvalSet out;
  out.applied.assign(n, std::nullopt);
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t i = order[k];
    auto& c = clips[i];
    if (c.frames.empty()) continue;
    Rng crng(clip_seed(seed, c.window.case_id, c.window.start));
    auto sector = draw_sector(crng, c.frames[0].width, c.frames[0].height, radius_lo, radius_hi);
    CutmixDraw draw;
    c.frames = noise_cutmix_clip(c.frames, pool, sector, crng, &draw);
    out.applied[i] = draw;
  }
  out.clips = std::move(clips);
  return out;
}

}  // namespace ebus
