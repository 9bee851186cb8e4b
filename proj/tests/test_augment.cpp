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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ebus/augment.hpp"
#include "ebus/error.hpp"

namespace ebus {
namespace {

FrameImage random_frame(Rng& rng, std::int64_t w, std::int64_t h) {
  FrameImage f(w, h);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return f;
}

Clip random_clip(Rng& rng, int frames, std::int64_t w, std::int64_t h) {
  Clip c;
  for (int i = 0; i < frames; ++i) c.push_back(random_frame(rng, w, h));
  return c;
}

// Corner pixel coordinates, written out independently of in_sector.
std::pair<double, double> corner_xy(Corner c, std::int64_t w, std::int64_t h) {
  switch (c) {
    case Corner::kTopLeft: return {0, 0};
    case Corner::kTopRight: return {double(w - 1), 0};
    case Corner::kBottomLeft: return {0, double(h - 1)};
    case Corner::kBottomRight: return {double(w - 1), double(h - 1)};
  }
  return {0, 0};
}

TEST(Flip, ZeroProbabilityIsIdentity) {
  Rng rng(1);
  auto clip = random_clip(rng, 3, 5, 4);
  Rng r2(2);
  EXPECT_EQ(hflip_clip(clip, 0.0, r2), clip);
}

TEST(Flip, Involution) {
  Rng rng(1);
  auto clip = random_clip(rng, 3, 7, 5);
  EXPECT_EQ(hflip(hflip(clip)), clip);
}

TEST(Flip, ColumnMapWidthFour) {
  FrameImage f(4, 2);
  for (std::int64_t x = 0; x < 4; ++x) {
    f.at(x, 0) = static_cast<std::uint8_t>(x);
    f.at(x, 1) = static_cast<std::uint8_t>(10 + x);
  }
  auto g = hflip(Clip{f})[0];
  EXPECT_EQ(g.at(0, 0), 3);
  EXPECT_EQ(g.at(3, 0), 0);
  EXPECT_EQ(g.at(1, 1), 12);
  EXPECT_EQ(g.at(2, 1), 11);
}

TEST(Flip, WholeClipFlipsTogether) {
  Rng rng(5);
  auto clip = random_clip(rng, 6, 5, 5);
  for (int trial = 0; trial < 20; ++trial) {
    auto out = hflip_clip(clip, 0.5, rng);
    EXPECT_TRUE(out == clip || out == hflip(clip));
  }
  EXPECT_THROW(hflip_clip(clip, 1.5, rng), Error);
}

TEST(Cutmix, TopLeftRadiusTwoOnFourByFour) {
  FrameImage f(4, 4, 0);
  FrameImage noise(4, 4, 255);
  auto out = apply_cutmix(Clip{f}, noise, {Corner::kTopLeft, 2.0})[0];
  std::set<std::pair<int, int>> replaced;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (out.at(x, y) == 255) replaced.insert({x, y});
  EXPECT_EQ(replaced, (std::set<std::pair<int, int>>{{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
}

TEST(Cutmix, ZeroRadiusIsIdentity) {
  Rng rng(3);
  auto clip = random_clip(rng, 2, 6, 6);
  auto noise = random_frame(rng, 6, 6);
  for (Corner c : {Corner::kTopLeft, Corner::kTopRight, Corner::kBottomLeft, Corner::kBottomRight}) {
    EXPECT_EQ(apply_cutmix(clip, noise, {c, 0.0}), clip);
  }
}

TEST(Cutmix, ExactMaskingProperty) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto w = 4 + static_cast<std::int64_t>(rng.uniform_int(30));
    const auto h = 4 + static_cast<std::int64_t>(rng.uniform_int(30));
    auto clip = random_clip(rng, 3, w, h);
    NoisePool pool{{random_frame(rng, w, h), random_frame(rng, w, h)}};
    auto sector = draw_sector(rng, w, h);
    CutmixDraw draw;
    auto out = noise_cutmix_clip(clip, pool, sector, rng, &draw);
    const auto& noise = pool.images[draw.noise_index];
    const auto [cx, cy] = corner_xy(sector.corner, w, h);
    for (std::size_t t = 0; t < clip.size(); ++t)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          const double d = std::hypot(x - cx, y - cy);
          const auto want = d < sector.radius ? noise.at(x, y) : clip[t].at(x, y);
          ASSERT_EQ(out[t].at(x, y), want);
        }
  }
}

TEST(Cutmix, Errors) {
  Rng rng(1);
  auto clip = random_clip(rng, 1, 4, 4);
  EXPECT_THROW(noise_cutmix_clip(clip, NoisePool{}, {Corner::kTopLeft, 1.0}, rng), Error);
  EXPECT_THROW(apply_cutmix(clip, FrameImage(5, 4), {Corner::kTopLeft, 1.0}), ShapeError);
}

TEST(Cutmix, FlipCommutesOnlyWithMirroredSector) {
  Rng rng(4);
  auto clip = random_clip(rng, 1, 8, 8);
  auto noise = random_frame(rng, 8, 8);
  auto noise_flipped = hflip(Clip{noise})[0];
  const CornerSector tl{Corner::kTopLeft, 4.0}, tr{Corner::kTopRight, 4.0};
  auto a = hflip(apply_cutmix(clip, noise, tl));
  auto b = apply_cutmix(hflip(clip), noise, tl);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, apply_cutmix(hflip(clip), noise_flipped, tr));
}

TEST(Sector, DrawRange) {
  Rng rng(12);
  std::set<Corner> seen;
  for (int i = 0; i < 400; ++i) {
    auto s = draw_sector(rng, 40, 30);
    EXPECT_GE(s.radius, 0.25 * 30);
    EXPECT_LE(s.radius, 0.5 * 30);
    seen.insert(s.corner);
  }
  EXPECT_EQ(seen.size(), 4u);
}

TEST(Views, ZeroProbabilitiesGiveCopies) {
  Rng rng(6);
  auto clip = random_clip(rng, 4, 6, 6);
  ViewSpec spec;
  spec.flip_p = 0.0;
  spec.cutmix_p = 0.0;
  auto views = make_views(clip, spec, nullptr, 77);
  ASSERT_EQ(views.size(), 2u);
  EXPECT_EQ(views[0], clip);
  EXPECT_EQ(views[1], clip);
}

TEST(Views, DeterministicAndCounted) {
  Rng rng(6);
  auto clip = random_clip(rng, 4, 16, 16);
  NoisePool pool{{random_frame(rng, 16, 16)}};
  ViewSpec spec;
  spec.k_views = 3;
  auto a = make_views(clip, spec, &pool, 123);
  auto b = make_views(clip, spec, &pool, 123);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a, b);
  spec.k_views = 1;
  EXPECT_THROW(make_views(clip, spec, &pool, 1), Error);
}

TEST(Views, FirstViewIsFlipOnly) {
  Rng rng(8);
  auto clip = random_clip(rng, 2, 16, 16);
  NoisePool pool{{FrameImage(16, 16, 0)}};
  ViewSpec spec;
  spec.k_views = 4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto views = make_views(clip, spec, &pool, seed);
    EXPECT_TRUE(views[0] == clip || views[0] == hflip(clip));
    for (int v = 1; v < 4; ++v) {
      // cutmix_p = 1 with a black noise image: the corner pixel is zeroed.
      EXPECT_FALSE(views[v] == clip || views[v] == hflip(clip));
    }
  }
}

std::vector<ClipSample> sample_set(int n) {
  Rng rng(31);
  std::vector<ClipSample> out;
  for (int i = 0; i < n; ++i) {
    ClipSample s;
    s.window.case_id = "case" + std::to_string(i / 3);
    s.window.start = 8 * (i % 3);
    s.window.label = i % 2 ? Label::kMalignant : Label::kBenign;
    s.frames = random_clip(rng, 2, 12, 12);
    out.push_back(std::move(s));
  }
  return out;
}

TEST(NoiseEval, HalfOfTenClips) {
  Rng rng(2);
  NoisePool pool{{FrameImage(12, 12, 0)}};
  auto clips = sample_set(10);
  auto set = build_noise_eval_set(clips, pool, 0.5, 5);
  int applied = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    EXPECT_EQ(set.clips[i].window.case_id, clips[i].window.case_id);
    EXPECT_EQ(set.clips[i].window.label, clips[i].window.label);
    if (set.applied[i]) {
      ++applied;
      EXPECT_EQ(set.clips[i].frames, apply_cutmix(clips[i].frames, pool.images[0], set.applied[i]->sector));
    } else {
      EXPECT_EQ(set.clips[i].frames, clips[i].frames);
    }
  }
  EXPECT_EQ(applied, 5);
}

TEST(NoiseEval, FractionZeroUnchanged) {
  NoisePool pool{{FrameImage(12, 12, 0)}};
  auto clips = sample_set(7);
  auto set = build_noise_eval_set(clips, pool, 0.0, 5);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    EXPECT_FALSE(set.applied[i]);
    EXPECT_EQ(set.clips[i].frames, clips[i].frames);
  }
}

TEST(NoiseEval, SameSeedSameSubsetRegardlessOfOrder) {
  NoisePool pool{{FrameImage(12, 12, 0), FrameImage(12, 12, 9)}};
  auto clips = sample_set(12);
  auto key = [](const NoiseEvalSet& s) {
    std::set<std::pair<std::string, std::int64_t>> out;
    for (std::size_t i = 0; i < s.clips.size(); ++i)
      if (s.applied[i]) out.insert({s.clips[i].window.case_id, s.clips[i].window.start});
    return out;
  };
  auto a = build_noise_eval_set(clips, pool, 0.5, 42);
  auto b = build_noise_eval_set(clips, pool, 0.5, 42);
  EXPECT_EQ(key(a), key(b));
  for (std::size_t i = 0; i < clips.size(); ++i) EXPECT_EQ(a.clips[i].frames, b.clips[i].frames);
  std::reverse(clips.begin(), clips.end());
  EXPECT_EQ(key(build_noise_eval_set(clips, pool, 0.5, 42)), key(a));
  EXPECT_THROW(build_noise_eval_set(clips, pool, 1.5, 42), Error);
}

}  // namespace
}  // namespace ebus
