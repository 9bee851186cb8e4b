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

#include <fstream>

#include "ebus/error.hpp"
#include "ebus/synth.hpp"
#include "test_util.hpp"

namespace ebus {
namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.cases_per_class = 2;
  s.frames_per_case = 40;
  s.noise_pool_size = 3;
  s.seed = 21;
  return s;
}

double mean_intensity(const FrameImage& f) {
  double s = 0;
  for (auto p : f.pixels) s += p;
  return s / static_cast<double>(f.pixels.size());
}

// Direct per-window variance, no integral images.
double local_variance_oracle(const FrameImage& f, std::int64_t w) {
  double total = 0;
  std::int64_t windows = 0;
  for (std::int64_t y = 0; y + w <= f.height; ++y)
    for (std::int64_t x = 0; x + w <= f.width; ++x) {
      double s = 0, s2 = 0;
      for (std::int64_t dy = 0; dy < w; ++dy)
        for (std::int64_t dx = 0; dx < w; ++dx) {
          const double v = f.at(x + dx, y + dy);
          s += v;
          s2 += v * v;
        }
      const double n = double(w * w);
      total += s2 / n - (s / n) * (s / n);
      ++windows;
    }
  return total / windows;
}

TEST(LocalVariance, MatchesDirectComputation) {
  Rng rng(1);
  FrameImage f(13, 9);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  EXPECT_NEAR(mean_local_variance(f, 5), local_variance_oracle(f, 5), 1e-6);
  EXPECT_EQ(mean_local_variance(FrameImage(8, 8, 77), 5), 0.0);
}

TEST(CaseVideo, DeterministicPerSeed) {
  auto spec = small_spec();
  Rng a(5), b(5), c(6);
  auto va = gen_case_video(Label::kMalignant, spec, a);
  auto vb = gen_case_video(Label::kMalignant, spec, b);
  auto vc = gen_case_video(Label::kMalignant, spec, c);
  ASSERT_EQ(va.size(), 40u);
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
  EXPECT_EQ(va[0].width, 64);
}

TEST(CaseVideo, MalignantTextureIsRougher) {
  auto spec = small_spec();
  spec.frames_per_case = 8;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rb(derive_seed(seed, "benign")), rm(derive_seed(seed, "malignant"));
    auto ben = gen_case_video(Label::kBenign, spec, rb);
    auto mal = gen_case_video(Label::kMalignant, spec, rm);
    double vb = 0, vm = 0;
    for (auto& f : ben) vb += local_variance_oracle(f, 5) / ben.size();
    for (auto& f : mal) vm += local_variance_oracle(f, 5) / mal.size();
    EXPECT_GT(vm, vb);
    EXPECT_LE(vb, kBenignVarianceCeiling);
    EXPECT_GE(vm, kMalignantVarianceFloor);
  }
}

TEST(NoiseImage, BrighterThanLesionFrames) {
  auto spec = small_spec();
  Rng rn(3), rl(4);
  auto noise = gen_noise_image(spec, rn);
  EXPECT_EQ(noise.width, spec.image_side);
  EXPECT_EQ(noise.height, spec.image_side);
  double lesion = 0;
  auto frames = gen_case_video(Label::kBenign, spec, rl);
  for (auto& f : frames) lesion += mean_intensity(f) / frames.size();
  EXPECT_GT(mean_intensity(noise), lesion);
  Rng rn2(3);
  EXPECT_EQ(gen_noise_image(spec, rn2), noise);
}

TEST(Dataset, WritesLoadableManifest) {
  testing::TempDir dir("synth");
  auto out = write_synthetic_dataset(small_spec(), dir.path() / "data", dir.path() / "noise");
  EXPECT_EQ(out.cases, 4);
  EXPECT_EQ(out.frames, 160);
  EXPECT_EQ(out.noise_images, 3);
  auto cases = load_manifest(out.manifest);
  ASSERT_EQ(cases.size(), 4u);
  int malignant = 0;
  for (auto& c : cases) {
    EXPECT_EQ(c.frame_paths.size(), 40u);
    malignant += c.label == Label::kMalignant;
    // 40 frames at 0.1 s hold exactly one 32-frame window with a 16-frame stride.
    EXPECT_EQ(enumerate_clips(c, SamplingConfig::paper()).size(), 1u);
  }
  EXPECT_EQ(malignant, 2);
  EXPECT_EQ(read_pgm(cases[0].frame_paths[0]).width, 64);
}

TEST(Dataset, SameSeedSameBytes) {
  testing::TempDir a("synth_a"), b("synth_b");
  auto oa = write_synthetic_dataset(small_spec(), a.path() / "d", a.path() / "n");
  auto ob = write_synthetic_dataset(small_spec(), b.path() / "d", b.path() / "n");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  auto ca = load_manifest(oa.manifest), cb = load_manifest(ob.manifest);
  for (std::size_t i = 0; i < ca.size(); ++i)
    for (std::size_t j = 0; j < ca[i].frame_paths.size(); ++j)
      ASSERT_EQ(slurp(ca[i].frame_paths[j]), slurp(cb[i].frame_paths[j]));
  EXPECT_EQ(slurp(a.path() / "n" / "noise_000.pgm"), slurp(b.path() / "n" / "noise_000.pgm"));
}

TEST(SynthSpec, Validation) {
  auto s = small_spec();
  s.cases_per_class = 0;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.frame_period_s = 0;
  EXPECT_THROW(s.validate(), Error);
}

}  // namespace
}  // namespace ebus
