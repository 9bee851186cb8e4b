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
#include <fstream>
#include <numeric>
#include <set>

#include "ebus/dataio.hpp"
#include "ebus/error.hpp"
#include "ebus/rng.hpp"
#include "test_util.hpp"

namespace ebus {
namespace {

using testing::TempDir;

FrameImage random_frame(Rng& rng, std::int64_t w, std::int64_t h) {
  FrameImage f(w, h);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return f;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

TEST(Pgm, TwoByTwoHeader) {
  auto b = bytes_of("P5\n2 2\n255\n");
  for (std::uint8_t v : {10, 20, 30, 40}) b.push_back(v);
  auto f = decode_pgm(b);
  EXPECT_EQ(f.width, 2);
  EXPECT_EQ(f.height, 2);
  EXPECT_EQ(f.at(1, 0), 20);
  EXPECT_EQ(f.at(0, 1), 30);
}

TEST(Pgm, CommentsInHeader) {
  auto b = bytes_of("P5 # scanner\n3 # w\n1\n255\n");
  for (std::uint8_t v : {1, 2, 3}) b.push_back(v);
  EXPECT_EQ(decode_pgm(b).pixels, (std::vector<std::uint8_t>{1, 2, 3}));
}

TEST(Pgm, WriteReadRoundtrip) {
  TempDir dir("pgm");
  Rng rng(4);
  for (int i = 0; i < 5; ++i) {
    auto f = random_frame(rng, 1 + static_cast<std::int64_t>(rng.uniform_int(40)),
                          1 + static_cast<std::int64_t>(rng.uniform_int(40)));
    write_pgm(f, dir.path() / "f.pgm");
    EXPECT_EQ(read_pgm(dir.path() / "f.pgm"), f);
  }
}

TEST(Pgm, MaxvalOtherThan255Rejected) {
  auto b = bytes_of("P5\n2 2\n254\n");
  b.resize(b.size() + 4, 0);
  try {
    decode_pgm(b);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 7u);  // start of the maxval token
  }
}

TEST(Pgm, ErrorsCarryOffsets) {
  auto truncated = bytes_of("P5\n4 4\n255\n");
  truncated.resize(truncated.size() + 3, 0);
  try {
    decode_pgm(truncated);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), truncated.size());
  }
  try {
    decode_pgm(bytes_of("P2\n1 1\n255\n0"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  try {
    decode_pgm(bytes_of("P5\n2 x\n255\n"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
}

// ------------------------------------------------------------ manifest

class ManifestTest : public ::testing::Test {
 protected:
  void make_case(const std::string& name, int frames) {
    std::filesystem::create_directories(dir_.path() / name);
    for (int i = frames - 1; i >= 0; --i) {
      write_pgm(FrameImage(2, 2, static_cast<std::uint8_t>(i)),
                dir_.path() / name / ("f" + std::to_string(i) + ".pgm"));
    }
  }
  void write(const std::string& text) {
    std::ofstream(dir_.path() / "manifest.json") << text;
  }
  std::filesystem::path manifest() const { return dir_.path() / "manifest.json"; }

  TempDir dir_{"manifest"};
};

TEST_F(ManifestTest, TwoValidCases) {
  make_case("a", 3);
  make_case("b", 12);
  std::filesystem::create_directories(dir_.path() / "b" / "sub.pgm");
  write(R"([{"case_id":"a","label":"benign","frame_dir":"a","frame_pattern":"f*.pgm","frame_period_s":0.1},
            {"case_id":"b","label":"malignant","frame_dir":"b","frame_pattern":"f?.pgm","frame_period_s":0.2}])");
  auto recs = load_manifest(manifest());
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].label, Label::kBenign);
  EXPECT_EQ(recs[1].label, Label::kMalignant);
  EXPECT_DOUBLE_EQ(recs[1].frame_period_s, 0.2);
  ASSERT_EQ(recs[0].frame_paths.size(), 3u);
  EXPECT_EQ(recs[0].frame_paths[2].filename(), "f2.pgm");
  // "f?.pgm" excludes f10 and f11; directories never match.
  EXPECT_EQ(recs[1].frame_paths.size(), 10u);
}

TEST_F(ManifestTest, LexicographicFrameOrder) {
  make_case("a", 12);
  write(R"([{"case_id":"a","label":"benign","frame_dir":"a","frame_pattern":"*.pgm","frame_period_s":0.1}])");
  auto recs = load_manifest(manifest());
  std::vector<std::string> names;
  for (const auto& p : recs[0].frame_paths) names.push_back(p.filename().string());
  auto sorted = names;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(names, sorted);
  EXPECT_EQ(names[1], "f1.pgm");
  EXPECT_EQ(names[2], "f10.pgm");
}

TEST_F(ManifestTest, WrongCaseLabelRejected) {
  make_case("a", 1);
  write(R"([{"case_id":"a","label":"Malignant","frame_dir":"a","frame_pattern":"*.pgm","frame_period_s":0.1}])");
  EXPECT_THROW(load_manifest(manifest()), Error);
}

TEST_F(ManifestTest, EmptyCaseNamesCaseId) {
  make_case("a", 1);
  write(R"([{"case_id":"lonely_case","label":"benign","frame_dir":"a","frame_pattern":"*.png","frame_period_s":0.1}])");
  try {
    load_manifest(manifest());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("lonely_case"), std::string::npos);
  }
}

TEST_F(ManifestTest, DuplicateAndUnknownFieldsRejected) {
  make_case("a", 1);
  write(R"([{"case_id":"a","label":"benign","frame_dir":"a","frame_pattern":"*.pgm","frame_period_s":0.1},
            {"case_id":"a","label":"benign","frame_dir":"a","frame_pattern":"*.pgm","frame_period_s":0.1}])");
  EXPECT_THROW(load_manifest(manifest()), Error);
  write(R"([{"case_id":"a","label":"benign","frame_dir":"a","frame_pattern":"*.pgm","frame_period_s":0.1,"fps":10}])");
  EXPECT_THROW(load_manifest(manifest()), Error);
  write(R"([{"case_id":"a","label":"benign","frame_dir":"a","frame_pattern":"*.pgm","frame_period_s":0}])");
  EXPECT_THROW(load_manifest(manifest()), Error);
}

TEST_F(ManifestTest, BadJsonReportsOffset) {
  write("[{\"case_id\": }]");
  try {
    load_manifest(manifest());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 0u);
  }
}

TEST_F(ManifestTest, WriteThenLoad) {
  make_case("x", 4);
  write_manifest({{"x", Label::kMalignant, "x", "f*.pgm", 0.1}}, manifest());
  auto recs = load_manifest(manifest());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].case_id, "x");
  EXPECT_EQ(recs[0].frame_paths.size(), 4u);
}

TEST(Glob, Patterns) {
  EXPECT_TRUE(glob_match("frame_*.pgm", "frame_0001.pgm"));
  EXPECT_TRUE(glob_match("*", ""));
  EXPECT_TRUE(glob_match("a?c", "abc"));
  EXPECT_FALSE(glob_match("a?c", "ac"));
  EXPECT_FALSE(glob_match("*.pgm", "x.pgm.bak"));
  EXPECT_TRUE(glob_match("*a*b*", "xxaxxbxx"));
}

// ------------------------------------------------------------- clips

CaseRecord fake_case(std::int64_t frames, double period = 0.1) {
  CaseRecord r;
  r.case_id = "c";
  r.label = Label::kMalignant;
  r.frame_period_s = period;
  for (std::int64_t i = 0; i < frames; ++i) r.frame_paths.emplace_back("f" + std::to_string(i));
  return r;
}

TEST(Clips, NinetySixFramesGiveFiveClips) {
  auto clips = enumerate_clips(fake_case(96), SamplingConfig::paper());
  ASSERT_EQ(clips.size(), 5u);
  std::vector<std::int64_t> starts;
  for (const auto& c : clips) starts.push_back(c.start);
  EXPECT_EQ(starts, (std::vector<std::int64_t>{0, 16, 32, 48, 64}));
}

TEST(Clips, SingleAndDegenerate) {
  const auto cfg = SamplingConfig::paper();
  auto one = enumerate_clips(fake_case(32), cfg);
  ASSERT_EQ(one.size(), 1u);
  std::vector<std::int64_t> fast(32);
  std::iota(fast.begin(), fast.end(), 0);
  EXPECT_EQ(one[0].fast_indices, fast);
  EXPECT_EQ(one[0].slow_indices, (std::vector<std::int64_t>{0, 4, 8, 12, 16, 20, 24, 28}));
  EXPECT_TRUE(enumerate_clips(fake_case(31), cfg).empty());
  EXPECT_TRUE(enumerate_clips(fake_case(0), cfg).empty());
}

TEST(Clips, AdjacentClipsShareHalf) {
  const auto cfg = SamplingConfig::paper();
  auto clips = enumerate_clips(fake_case(200), cfg);
  for (std::size_t i = 1; i < clips.size(); ++i) {
    const auto& a = clips[i - 1].fast_indices;
    const auto& b = clips[i].fast_indices;
    std::vector<std::int64_t> shared;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
    EXPECT_NEAR(static_cast<double>(shared.size()) * cfg.fast_period_s, 1.6, 1e-12);
    EXPECT_NEAR(static_cast<double>(b[0] - a[0]) * cfg.fast_period_s, 1.6, 1e-12);
  }
}

TEST(Clips, BruteForceOracle) {
  const auto cfg = SamplingConfig::paper();
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::int64_t>(rng.uniform_int(300));
    std::vector<std::vector<std::int64_t>> expect;
    for (std::int64_t s = 0; s < n; ++s) {
      if (s % 16 != 0 || s + 32 > n) continue;
      std::vector<std::int64_t> w;
      for (std::int64_t i = s; i < s + 32; ++i) w.push_back(i);
      expect.push_back(w);
    }
    auto clips = enumerate_clips(fake_case(n), cfg);
    ASSERT_EQ(clips.size(), expect.size()) << "n=" << n;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      EXPECT_EQ(clips[i].fast_indices, expect[i]);
      for (std::size_t k = 0; k < 8; ++k) {
        EXPECT_EQ(clips[i].slow_indices[k], clips[i].fast_indices[4 * k]);
      }
      EXPECT_EQ(clips[i].fast_frames, clips[i].fast_indices);
    }
  }
}

TEST(Clips, NearestFrameResampling) {
  // Stored every 0.2 s: 20 frames span 3.8 s -> 39 fast positions.
  const auto cfg = SamplingConfig::paper();
  auto clips = enumerate_clips(fake_case(20, 0.2), cfg);
  ASSERT_EQ(clips.size(), 1u);
  const auto& f = clips[0].fast_frames;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double t = static_cast<double>(i) * 0.1;
    const double best = std::round(t / 0.2);
    EXPECT_EQ(f[i], static_cast<std::int64_t>(best));
  }
  EXPECT_EQ(fast_timeline_length(20, 0.2, cfg), 39);
}

TEST(Clips, TinyPresetWindows) {
  auto clips = enumerate_clips(fake_case(48), SamplingConfig::tiny());
  ASSERT_EQ(clips.size(), 5u);
  EXPECT_EQ(clips[1].start, 8);
  EXPECT_EQ(clips[0].slow_indices, (std::vector<std::int64_t>{0, 4, 8, 12}));
}

TEST(Clips, SamplingInvariants) {
  auto c = SamplingConfig::paper();
  EXPECT_EQ(c.clip_fast_len, c.slow_stride * c.clip_slow_len);
  EXPECT_NEAR(c.fast_period_s * static_cast<double>(c.slow_stride), 0.4, 1e-12);
  EXPECT_NEAR(c.fast_period_s * static_cast<double>(c.clip_fast_len), 3.2, 1e-12);
  c.clip_slow_len = 7;
  EXPECT_THROW(c.validate(), Error);
}

// ------------------------------------------------------- crop / resize

TEST(CropResize, CenterCropArithmetic) {
  auto [oy, ox] = center_crop_offsets(1040, 1392, 960);
  EXPECT_EQ(oy, 40);
  EXPECT_EQ(ox, 216);
}

TEST(CropResize, ConstantStaysConstant) {
  for (auto [w, h] : {std::pair{960, 960}, std::pair{1000, 1100}, std::pair{300, 200}}) {
    auto out = crop_resize(FrameImage(w, h, 77), SamplingConfig::paper());
    EXPECT_EQ(out.width, 224);
    EXPECT_EQ(out.height, 224);
    for (auto p : out.pixels) ASSERT_EQ(p, 77);
  }
}

// Area average by exact 2-D cell overlap, independent of the separable path.
FrameImage area_oracle(const FrameImage& in, std::int64_t out) {
  FrameImage o(out, out);
  const double r = static_cast<double>(in.width) / static_cast<double>(out);
  for (std::int64_t oy = 0; oy < out; ++oy)
    for (std::int64_t ox = 0; ox < out; ++ox) {
      double acc = 0;
      for (std::int64_t y = 0; y < in.height; ++y)
        for (std::int64_t x = 0; x < in.width; ++x) {
          const double wx = std::max(0.0, std::min((ox + 1) * r, x + 1.0) - std::max(ox * r, 1.0 * x));
          const double wy = std::max(0.0, std::min((oy + 1) * r, y + 1.0) - std::max(oy * r, 1.0 * y));
          acc += wx * wy * in.at(x, y);
        }
      o.at(ox, oy) = static_cast<std::uint8_t>(std::lround(acc / (r * r)));
    }
  return o;
}

TEST(CropResize, MatchesTwoDimensionalAreaOracle) {
  Rng rng(3);
  SamplingConfig cfg;
  for (auto [side, out] : {std::pair{10, 4}, std::pair{21, 5}, std::pair{30, 7}}) {
    cfg.crop_side = side;
    cfg.out_side = out;
    auto f = random_frame(rng, side, side);
    auto got = crop_resize(f, cfg);
    auto want = area_oracle(f, out);
    for (std::size_t i = 0; i < got.pixels.size(); ++i) {
      EXPECT_LE(std::abs(int(got.pixels[i]) - int(want.pixels[i])), 1);
    }
  }
}

TEST(CropResize, CropOnlyWhenSizesMatch) {
  SamplingConfig cfg;
  cfg.crop_side = 4;
  cfg.out_side = 4;
  Rng rng(8);
  auto f = random_frame(rng, 8, 6);
  auto out = crop_resize(f, cfg);
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t x = 0; x < 4; ++x) EXPECT_EQ(out.at(x, y), f.at(x + 2, y + 1));
}

TEST(CropResize, ReflectPadsSmallFrames) {
  SamplingConfig cfg;
  cfg.crop_side = 5;
  cfg.out_side = 5;
  FrameImage f(3, 3);
  for (std::int64_t i = 0; i < 9; ++i) f.pixels[i] = static_cast<std::uint8_t>(i);
  auto out = crop_resize(f, cfg);
  // Row/column mirror without repeating the edge: -1 -> 1, 3 -> 1.
  auto src = [](std::int64_t i) { return i < 0 ? -i : (i > 2 ? 4 - i : i); };
  for (std::int64_t y = 0; y < 5; ++y)
    for (std::int64_t x = 0; x < 5; ++x) EXPECT_EQ(out.at(x, y), f.at(src(x - 1), src(y - 1)));
}

TEST(CropResize, PreservesMeanOnUniformNoise) {
  Rng rng(21);
  auto f = random_frame(rng, 960, 960);
  auto out = crop_resize(f, SamplingConfig::paper());
  auto mean = [](const FrameImage& im) {
    return std::accumulate(im.pixels.begin(), im.pixels.end(), 0.0) / static_cast<double>(im.pixels.size());
  };
  EXPECT_NEAR(mean(out), mean(f), 1.0);
}

// ------------------------------------------------------------- split

std::vector<CaseRecord> labelled_cases(int malignant, int benign) {
  std::vector<CaseRecord> out;
  for (int i = 0; i < malignant; ++i) out.push_back({"m" + std::to_string(i), Label::kMalignant, {}, 0.1});
  for (int i = 0; i < benign; ++i) out.push_back({"b" + std::to_string(i), Label::kBenign, {}, 0.1});
  return out;
}

int count(const std::vector<CaseRecord>& v, Label l) {
  return static_cast<int>(std::count_if(v.begin(), v.end(), [&](const CaseRecord& c) { return c.label == l; }));
}

TEST(Split, LargeUnbalancedCounts) {
  auto s = split_cases(labelled_cases(219, 90), 0.8, 5);
  EXPECT_EQ(count(s.train, Label::kMalignant), 175);
  EXPECT_EQ(count(s.train, Label::kBenign), 72);
  EXPECT_EQ(count(s.val, Label::kMalignant), 44);
  EXPECT_EQ(count(s.val, Label::kBenign), 18);
}

TEST(Split, SingleClassTen) {
  auto s = split_cases(labelled_cases(10, 0), 0.8, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 2u);
}

std::set<std::string> ids(const std::vector<CaseRecord>& v) {
  std::set<std::string> out;
  for (const auto& c : v) out.insert(c.case_id);
  return out;
}

TEST(Split, DeterministicPartitionIndependentOfInputOrder) {
  auto cases = labelled_cases(37, 23);
  auto a = split_cases(cases, 0.8, 9);
  Rng rng(2);
  rng.shuffle(cases.begin(), cases.end());
  auto b = split_cases(cases, 0.8, 9);
  EXPECT_EQ(ids(a.train), ids(b.train));
  EXPECT_EQ(ids(a.val), ids(b.val));
  std::set<std::string> all = ids(a.train);
  for (const auto& id : ids(a.val)) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all.size(), 60u);
  EXPECT_NE(ids(split_cases(cases, 0.8, 10).val), ids(a.val));
}

TEST(Split, FloorRuleProperty) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + static_cast<int>(rng.uniform_int(80));
    const int b = 1 + static_cast<int>(rng.uniform_int(80));
    const double ratio = rng.uniform(0.1, 0.95);
    auto s = split_cases(labelled_cases(m, b), ratio, trial);
    EXPECT_EQ(count(s.train, Label::kMalignant), static_cast<int>(std::floor(ratio * m + 1e-9)));
    EXPECT_EQ(count(s.train, Label::kBenign), static_cast<int>(std::floor(ratio * b + 1e-9)));
    EXPECT_EQ(s.train.size() + s.val.size(), static_cast<std::size_t>(m + b));
  }
}

TEST(Split, Errors) {
  EXPECT_THROW(split_cases({}, 0.8, 1), Error);
  EXPECT_THROW(split_cases(labelled_cases(2, 2), 0.0, 1), Error);
  auto dup = labelled_cases(2, 0);
  dup[1].case_id = dup[0].case_id;
  EXPECT_THROW(split_cases(dup, 0.8, 1), Error);
}

TEST(Tensors, SlowPathwayTakesEveryStrideFrame) {
  Clip clip;
  for (int t = 0; t < 8; ++t) clip.push_back(FrameImage(3, 2, static_cast<std::uint8_t>(10 * t)));
  const Clip* ptrs[] = {&clip, &clip};
  auto in = clips_to_tensors(ptrs, 4);
  EXPECT_EQ(in.fast.dims(), (Shape{2, 1, 8, 2, 3}));
  EXPECT_EQ(in.slow.dims(), (Shape{2, 1, 2, 2, 3}));
  EXPECT_FLOAT_EQ(in.slow.at({1, 0, 1, 1, 2}), 40.0f / 255.0f);
  EXPECT_FLOAT_EQ(in.fast.at({0, 0, 7, 0, 0}), 70.0f / 255.0f);
}

}  // namespace
}  // namespace ebus
