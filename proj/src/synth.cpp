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

#include "ebus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ebus/error.hpp"

namespace ebus {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  if (cases_per_class <= 0 || frames_per_case <= 0 || image_side <= 0 || noise_pool_size <= 0) {
    throw Error(ErrorCode::kConfig, "synthetic dataset counts and sizes must be positive");
  }
  if (image_side < 16) throw Error(ErrorCode::kConfig, "image_side must be at least 16");
  if (!(frame_period_s > 0.0)) throw Error(ErrorCode::kConfig, "frame_period_s must be positive");
}

double mean_local_variance(const FrameImage& f, std::int64_t window) {
  if (window < 1 || window > f.width || window > f.height) {
    throw ShapeError("HW", "local variance window larger than frame");
  }
  const std::int64_t w1 = f.width + 1;
  std::vector<double> s((f.height + 1) * w1, 0.0), s2((f.height + 1) * w1, 0.0);
  for (std::int64_t y = 0; y < f.height; ++y) {
    for (std::int64_t x = 0; x < f.width; ++x) {
      const double v = f.at(x, y);
      const std::int64_t i = (y + 1) * w1 + (x + 1);
      s[i] = v + s[i - 1] + s[i - w1] - s[i - w1 - 1];
      s2[i] = v * v + s2[i - 1] + s2[i - w1] - s2[i - w1 - 1];
    }
  }
  auto box = [&](const std::vector<double>& t, std::int64_t x, std::int64_t y) {
    const std::int64_t x1 = x + window, y1 = y + window;
    return t[y1 * w1 + x1] - t[y * w1 + x1] - t[y1 * w1 + x] + t[y * w1 + x];
  };
  const double n = static_cast<double>(window * window);
  double total = 0.0;
  std::int64_t count = 0;
  for (std::int64_t y = 0; y + window <= f.height; ++y) {
    for (std::int64_t x = 0; x + window <= f.width; ++x) {
      const double m = box(s, x, y) / n;
      total += std::max(0.0, box(s2, x, y) / n - m * m);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

struct Lesion {
  double cx, cy, a, b, rot;
  double vx, vy;                 // drift in pixels per second
  double lobe_amp = 0.0, lobe_amp2 = 0.0;
  int lobes = 0, lobes2 = 0;
  double phase = 0.0, phase2 = 0.0;
  double level;
};

// Boundary radius scale in direction phi (1 for a plain ellipse).
double boundary_scale(const Lesion& l, double phi) {
  return 1.0 + l.lobe_amp * std::sin(l.lobes * phi + l.phase) +
         l.lobe_amp2 * std::sin(l.lobes2 * phi + l.phase2);
}

// Signed inside-ness: < 1 inside the lesion boundary.
double lesion_radius(const Lesion& l, double x, double y) {
  const double dx = x - l.cx, dy = y - l.cy;
  const double c = std::cos(l.rot), s = std::sin(l.rot);
  const double u = (c * dx + s * dy) / l.a;
  const double v = (-s * dx + c * dy) / l.b;
  const double r = std::sqrt(u * u + v * v);
  return r / boundary_scale(l, std::atan2(v, u));
}

}  // namespace

std::vector<FrameImage> gen_case_video(Label label, const SynthSpec& spec, Rng& rng) {
  spec.validate();
  const auto side = static_cast<double>(spec.image_side);
  const bool malignant = label == Label::kMalignant;

  Lesion l;
  l.cx = side * (0.5 + rng.uniform(-0.08, 0.08));
  l.cy = side * (0.5 + rng.uniform(-0.08, 0.08));
  l.a = side * rng.uniform(0.18, 0.26);
  l.b = side * rng.uniform(0.16, 0.24);
  l.rot = rng.uniform(0.0, std::numbers::pi);
  const double speed = side * (malignant ? 0.01 : 0.02);
  l.vx = rng.uniform(-speed, speed);
  l.vy = rng.uniform(-speed, speed);
  if (malignant) {
    l.lobes = 5 + static_cast<int>(rng.uniform_int(3));
    l.lobes2 = 11 + static_cast<int>(rng.uniform_int(4));
    l.lobe_amp = rng.uniform(0.14, 0.22);
    l.lobe_amp2 = rng.uniform(0.05, 0.09);
    l.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    l.phase2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    l.level = rng.uniform(80.0, 100.0);
  } else {
    l.level = rng.uniform(95.0, 115.0);
  }
  const double background = rng.uniform(35.0, 50.0);
  const double shade_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<FrameImage> frames;
  frames.reserve(static_cast<std::size_t>(spec.frames_per_case));
  const std::int64_t n = spec.image_side;
  for (std::int64_t t = 0; t < spec.frames_per_case; ++t) {
    const double time = static_cast<double>(t) * spec.frame_period_s;
    Lesion cur = l;
    cur.cx += l.vx * time;
    cur.cy += l.vy * time;
    // Benign texture is smooth and static; malignant speckle and dots are
    // redrawn every frame.
    FrameImage img(n, n);
    for (std::int64_t y = 0; y < n; ++y) {
      for (std::int64_t x = 0; x < n; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const double shade = 1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * py / side + shade_phase);
        double v = background * shade * (1.0 + 0.12 * rng.normal());
        const double r = lesion_radius(cur, px, py);
        if (r < 1.0) {
          double inner;
          if (malignant) {
            inner = cur.level * (1.0 + 0.35 * rng.normal());
            if (rng.bernoulli(0.05)) inner = rng.uniform(215.0, 255.0);
          } else {
            inner = cur.level + 4.0 * std::sin(px * 0.35 + shade_phase) * std::cos(py * 0.3) +
                    2.0 * rng.normal();
          }
          // One-pixel soft edge for the benign margin, hard edge otherwise.
          const double edge = malignant ? 1.0 : std::clamp((1.0 - r) * std::min(cur.a, cur.b), 0.0, 1.0);
          v = edge * inner + (1.0 - edge) * v;
        }
        img.at(x, y) = quantize(v);
      }
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

FrameImage gen_noise_image(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  const std::int64_t n = spec.image_side;
  const auto side = static_cast<double>(n);
  const double apex_x = side * (0.5 + rng.uniform(-0.1, 0.1));
  const double apex_y = -side * rng.uniform(0.5, 0.7);
  const double half_angle = rng.uniform(0.75, 0.85);
  const double period = side * rng.uniform(0.12, 0.2);
  const double level = rng.uniform(130.0, 160.0);
  FrameImage img(n, n);
  for (std::int64_t y = 0; y < n; ++y) {
    for (std::int64_t x = 0; x < n; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - apex_x;
      const double dy = static_cast<double>(y) + 0.5 - apex_y;
      const double angle = std::atan2(std::abs(dx), dy);
      double v;
      if (angle <= half_angle) {
        const double r = std::sqrt(dx * dx + dy * dy);
        const double arcs = 0.65 + 0.35 * std::cos(2.0 * std::numbers::pi * r / period);
        v = level * arcs * (1.0 + 0.3 * rng.normal());
      } else {
        v = 12.0 + 4.0 * rng.normal();
      }
      img.at(x, y) = quantize(v);
    }
  }
  return img;
}

SynthOutput write_synthetic_dataset(const SynthSpec& spec, const fs::path& data_dir,
                                    const fs::path& noise_dir) {
  spec.validate();
  SynthOutput out;
  std::vector<ManifestEntry> entries;
  char name[64];
  for (Label label : {Label::kBenign, Label::kMalignant}) {
    for (std::int64_t i = 0; i < spec.cases_per_class; ++i) {
      std::snprintf(name, sizeof(name), "%s_%03lld", label_name(label), static_cast<long long>(i));
      const std::string case_id = name;
      Rng rng(derive_seed(spec.seed, label_name(label), static_cast<std::uint64_t>(i)));
      std::vector<FrameImage> frames;
      for (int attempt = 0;; ++attempt) {
        if (attempt == 100) {
          throw Error(ErrorCode::kNumeric, "could not generate case " + case_id +
                                               " within the variance margin");
        }
        frames = gen_case_video(label, spec, rng);
        double stat = 0.0;
        for (const auto& f : frames) stat += mean_local_variance(f);
        stat /= static_cast<double>(frames.size());
        if (label == Label::kBenign ? stat <= kBenignVarianceCeiling
                                    : stat >= kMalignantVarianceFloor) {
          break;
        }
      }
      const fs::path dir = data_dir / "cases" / case_id;
      fs::create_directories(dir);
      for (std::size_t t = 0; t < frames.size(); ++t) {
        std::snprintf(name, sizeof(name), "frame_%04zu.pgm", t);
        write_pgm(frames[t], dir / name);
      }
      entries.push_back({case_id, label, "cases/" + case_id, "frame_*.pgm", spec.frame_period_s});
      out.cases += 1;
      out.frames += static_cast<std::int64_t>(frames.size());
    }
  }
  fs::create_directories(data_dir);
  out.manifest = data_dir / "manifest.json";
  write_manifest(entries, out.manifest);

  fs::create_directories(noise_dir);
  for (std::int64_t i = 0; i < spec.noise_pool_size; ++i) {
    Rng rng(derive_seed(spec.seed, "noise", static_cast<std::uint64_t>(i)));
    std::snprintf(name, sizeof(name), "noise_%03lld.pgm", static_cast<long long>(i));
    write_pgm(gen_noise_image(spec, rng), noise_dir / name);
  }
  out.noise_dir = noise_dir;
  out.noise_images = spec.noise_pool_size;
  return out;
}

}  // namespace ebus
