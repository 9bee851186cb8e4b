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

#include "ebus/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "ebus/error.hpp"
#include "ebus/rng.hpp"

namespace ebus {

namespace fs = std::filesystem;

const char* label_name(Label label) {
  return label == Label::kMalignant ? "malignant" : "benign";
}

Label parse_label(std::string_view text) {
  if (text == "benign") return Label::kBenign;
  if (text == "malignant") return Label::kMalignant;
  throw Error(ErrorCode::kValue, "unknown label '" + std::string(text) +
                                     "' (expected benign or malignant)");
}

FrameImage::FrameImage(std::int64_t w, std::int64_t h, std::uint8_t fill)
    : width(w), height(h) {
  if (w <= 0 || h <= 0) {
    throw ShapeError("HW", "frame dims must be positive, got " +
                               std::to_string(w) + "x" + std::to_string(h));
  }
  pixels.assign(static_cast<std::size_t>(w * h), fill);
}

// ---------------------------------------------------------------- PGM

namespace {

bool is_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

struct PgmReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  std::int64_t number(const char* what) {
    skip_space_and_comments();
    if (pos >= bytes.size()) {
      throw FormatError(pos, std::string("PGM header truncated before ") + what);
    }
    if (bytes[pos] < '0' || bytes[pos] > '9') {
      throw FormatError(pos, std::string("PGM header: expected ") + what);
    }
    std::int64_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (std::int64_t{1} << 31)) throw FormatError(pos, "PGM header value too large");
      ++pos;
    }
    return v;
  }
};

}  // namespace

FrameImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError(0, "not a binary PGM (magic P5 expected)");
  }
  PgmReader r{bytes, 2};
  if (r.pos < bytes.size() && !is_space(bytes[r.pos]) && bytes[r.pos] != '#') {
    throw FormatError(r.pos, "PGM magic must be followed by whitespace");
  }
  std::int64_t w = r.number("width");
  std::int64_t h = r.number("height");
  r.skip_space_and_comments();
  const std::size_t maxval_pos = r.pos;
  std::int64_t maxval = r.number("maxval");
  if (w <= 0 || h <= 0) throw FormatError(maxval_pos, "PGM dims must be positive");
  if (maxval != 255) {
    throw FormatError(maxval_pos, "PGM maxval must be 255, got " + std::to_string(maxval));
  }
  if (r.pos >= bytes.size() || !is_space(bytes[r.pos])) {
    throw FormatError(r.pos, "PGM header must end with a single whitespace byte");
  }
  ++r.pos;
  const auto need = static_cast<std::size_t>(w * h);
  if (bytes.size() - r.pos < need) {
    throw FormatError(bytes.size(), "PGM pixel data truncated: need " +
                                        std::to_string(need) + " bytes, have " +
                                        std::to_string(bytes.size() - r.pos));
  }
  FrameImage img(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos), need,
              img.pixels.begin());
  return img;
}

std::vector<std::uint8_t> encode_pgm(const FrameImage& image) {
  std::string header = "P5\n" + std::to_string(image.width) + " " +
                       std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

FrameImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.offset(), path.string() + ": " + e.what());
  }
}

void write_pgm(const FrameImage& image, const fs::path& path) {
  auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

// ----------------------------------------------------------- manifest

bool glob_match(std::string_view pattern, std::string_view name) {
  std::size_t p = 0, n = 0, star = std::string_view::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorCode::kFormat, "manifest entry " + std::to_string(index) +
                                        " is missing '" + key + "'");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t index) {
  const json& v = require(obj, key, index);
  if (!v.is_string()) {
    throw Error(ErrorCode::kFormat, "manifest entry " + std::to_string(index) +
                                        ": '" + key + "' must be a string");
  }
  return v.get<std::string>();
}

}  // namespace

std::vector<CaseRecord> load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, "manifest " + path.string() + " is not valid JSON");
  }
  if (!doc.is_array()) throw Error(ErrorCode::kFormat, "manifest must be a JSON array");

  static const std::set<std::string> kKnown = {"case_id", "label", "frame_dir",
                                               "frame_pattern", "frame_period_s"};
  const fs::path base = path.parent_path();
  std::vector<CaseRecord> records;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& e = doc[i];
    if (!e.is_object()) {
      throw Error(ErrorCode::kFormat, "manifest entry " + std::to_string(i) +
                                          " is not an object");
    }
    for (const auto& [key, _] : e.items()) {
      if (!kKnown.count(key)) {
        throw Error(ErrorCode::kFormat, "manifest entry " + std::to_string(i) +
                                            ": unknown field '" + key + "'");
      }
    }
    CaseRecord rec;
    rec.case_id = require_string(e, "case_id", i);
    rec.label = parse_label(require_string(e, "label", i));
    const std::string dir = require_string(e, "frame_dir", i);
    const std::string pattern = require_string(e, "frame_pattern", i);
    const json& period = require(e, "frame_period_s", i);
    if (!period.is_number() || !(period.get<double>() > 0.0)) {
      throw Error(ErrorCode::kFormat, "case '" + rec.case_id +
                                          "': frame_period_s must be a positive number");
    }
    rec.frame_period_s = period.get<double>();
    if (rec.case_id.empty()) throw Error(ErrorCode::kValue, "empty case_id in manifest");
    if (!seen.insert(rec.case_id).second) {
      throw Error(ErrorCode::kValue, "duplicate case_id '" + rec.case_id + "'");
    }

    const fs::path frame_dir = base / dir;
    std::vector<std::string> names;
    std::error_code ec;
    for (fs::directory_iterator it(frame_dir, ec), end; !ec && it != end;
         it.increment(ec)) {
      if (!it->is_regular_file()) continue;
      std::string name = it->path().filename().string();
      if (glob_match(pattern, name)) names.push_back(std::move(name));
    }
    std::sort(names.begin(), names.end());
    if (names.empty()) {
      throw Error(ErrorCode::kValue, "case '" + rec.case_id + "' has no frames matching '" +
                                         pattern + "' in " + frame_dir.string());
    }
    for (const auto& n : names) rec.frame_paths.push_back(frame_dir / n);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  json doc = json::array();
  for (const auto& e : entries) {
    doc.push_back({{"case_id", e.case_id},
                   {"label", label_name(e.label)},
                   {"frame_dir", e.frame_dir},
                   {"frame_pattern", e.frame_pattern},
                   {"frame_period_s", e.frame_period_s}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

// ----------------------------------------------------------- sampling

SamplingConfig SamplingConfig::paper() { return SamplingConfig{}; }

SamplingConfig SamplingConfig::tiny() {
  SamplingConfig c;
  c.clip_fast_len = 16;
  c.clip_slow_len = 4;
  c.crop_side = 64;
  c.out_side = 64;
  return c;
}

void SamplingConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, m); };
  if (!(fast_period_s > 0.0)) fail("fast_period_s must be positive");
  if (slow_stride <= 0 || clip_slow_len <= 0 || clip_fast_len <= 0) {
    fail("clip lengths and slow_stride must be positive");
  }
  if (clip_fast_len != slow_stride * clip_slow_len) {
    fail("clip_fast_len must equal slow_stride * clip_slow_len");
  }
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    fail("overlap_fraction must lie in [0, 1)");
  }
  if (crop_side <= 0 || out_side <= 0) fail("crop_side and out_side must be positive");
  if (window_stride() < 1) fail("overlap leaves a window stride below one frame");
}

std::int64_t SamplingConfig::window_stride() const {
  return static_cast<std::int64_t>(
      std::llround(static_cast<double>(clip_fast_len) * (1.0 - overlap_fraction)));
}

std::vector<std::int64_t> window_starts(std::int64_t fast_len, const SamplingConfig& cfg) {
  cfg.validate();
  std::vector<std::int64_t> starts;
  const std::int64_t stride = cfg.window_stride();
  for (std::int64_t s = 0; s + cfg.clip_fast_len <= fast_len; s += stride) {
    starts.push_back(s);
  }
  return starts;
}

std::int64_t fast_timeline_length(std::int64_t stored_frames, double frame_period_s,
                                  const SamplingConfig& cfg) {
  if (stored_frames <= 0) return 0;
  if (!(frame_period_s > 0.0)) {
    throw Error(ErrorCode::kValue, "frame_period_s must be positive");
  }
  const double last = static_cast<double>(stored_frames - 1) * frame_period_s;
  return static_cast<std::int64_t>(std::floor(last / cfg.fast_period_s + 1e-9)) + 1;
}

std::vector<ClipWindow> enumerate_clips(const CaseRecord& record,
                                        const SamplingConfig& cfg) {
  const auto stored = static_cast<std::int64_t>(record.frame_paths.size());
  const std::int64_t fast_len = fast_timeline_length(stored, record.frame_period_s, cfg);
  const double ratio = cfg.fast_period_s / record.frame_period_s;
  auto to_stored = [&](std::int64_t i) {
    auto j = static_cast<std::int64_t>(std::llround(static_cast<double>(i) * ratio));
    return std::clamp<std::int64_t>(j, 0, stored - 1);
  };

  std::vector<ClipWindow> clips;
  for (std::int64_t s : window_starts(fast_len, cfg)) {
    ClipWindow w;
    w.case_id = record.case_id;
    w.label = record.label;
    w.start = s;
    for (std::int64_t i = 0; i < cfg.clip_fast_len; ++i) {
      w.fast_indices.push_back(s + i);
      w.fast_frames.push_back(to_stored(s + i));
    }
    for (std::int64_t i = 0; i < cfg.clip_slow_len; ++i) {
      w.slow_indices.push_back(w.fast_indices[i * cfg.slow_stride]);
      w.slow_frames.push_back(w.fast_frames[i * cfg.slow_stride]);
    }
    clips.push_back(std::move(w));
  }
  return clips;
}

// ------------------------------------------------------- preprocessing

std::pair<std::int64_t, std::int64_t> center_crop_offsets(std::int64_t height,
                                                          std::int64_t width,
                                                          std::int64_t side) {
  if (height < side || width < side) {
    throw ShapeError(height < side ? "H" : "W", "crop side " + std::to_string(side) +
                                                    " exceeds frame " +
                                                    std::to_string(height) + "x" +
                                                    std::to_string(width));
  }
  return {(height - side) / 2, (width - side) / 2};
}

namespace {

// Mirror index without repeating the edge sample; period 2(n-1).
std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Weights of each source sample for each output sample when resampling
// `in` samples to `out` by area averaging.
std::vector<std::vector<std::pair<std::int64_t, double>>> area_weights(std::int64_t in,
                                                                       std::int64_t out) {
  std::vector<std::vector<std::pair<std::int64_t, double>>> w(static_cast<std::size_t>(out));
  const double r = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * r;
    const double hi = static_cast<double>(o + 1) * r;
    for (auto j = static_cast<std::int64_t>(std::floor(lo)); j < in && j < hi; ++j) {
      const double overlap =
          std::min(hi, static_cast<double>(j + 1)) - std::max(lo, static_cast<double>(j));
      if (overlap > 0.0) w[static_cast<std::size_t>(o)].push_back({j, overlap / r});
    }
  }
  return w;
}

}  // namespace

FrameImage crop_resize(const FrameImage& frame, const SamplingConfig& cfg) {
  const std::int64_t side = cfg.crop_side;
  const std::int64_t ph = std::max(frame.height, side);
  const std::int64_t pw = std::max(frame.width, side);
  const std::int64_t pad_top = (ph - frame.height) / 2;
  const std::int64_t pad_left = (pw - frame.width) / 2;
  const auto [oy, ox] = center_crop_offsets(ph, pw, side);

  FrameImage crop(side, side);
  for (std::int64_t y = 0; y < side; ++y) {
    const std::int64_t sy = reflect_index(y + oy - pad_top, frame.height);
    for (std::int64_t x = 0; x < side; ++x) {
      const std::int64_t sx = reflect_index(x + ox - pad_left, frame.width);
      crop.at(x, y) = frame.at(sx, sy);
    }
  }
  if (cfg.out_side == side) return crop;

  const auto wts = area_weights(side, cfg.out_side);
  std::vector<double> rows(static_cast<std::size_t>(cfg.out_side * side));
  for (std::int64_t y = 0; y < side; ++y) {
    for (std::int64_t o = 0; o < cfg.out_side; ++o) {
      double acc = 0.0;
      for (const auto& [j, wt] : wts[static_cast<std::size_t>(o)]) acc += wt * crop.at(j, y);
      rows[static_cast<std::size_t>(y * cfg.out_side + o)] = acc;
    }
  }
  FrameImage out(cfg.out_side, cfg.out_side);
  for (std::int64_t o = 0; o < cfg.out_side; ++o) {
    for (std::int64_t x = 0; x < cfg.out_side; ++x) {
      double acc = 0.0;
      for (const auto& [j, wt] : wts[static_cast<std::size_t>(o)]) {
        acc += wt * rows[static_cast<std::size_t>(j * cfg.out_side + x)];
      }
      out.at(x, o) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
    }
  }
  return out;
}

// ------------------------------------------------------------- split

DatasetSplit split_cases(std::vector<CaseRecord> cases, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error(ErrorCode::kValue, "split ratio must lie in (0, 1]");
  }
  if (cases.empty()) throw Error(ErrorCode::kValue, "split_cases: no cases");
  std::sort(cases.begin(), cases.end(),
            [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; });
  for (std::size_t i = 1; i < cases.size(); ++i) {
    if (cases[i].case_id == cases[i - 1].case_id) {
      throw Error(ErrorCode::kValue, "duplicate case_id '" + cases[i].case_id + "'");
    }
  }

  DatasetSplit split;
  for (Label label : {Label::kBenign, Label::kMalignant}) {
    std::vector<CaseRecord> group;
    for (const auto& c : cases) {
      if (c.label == label) group.push_back(c);
    }
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(label)));
    rng.shuffle(group.begin(), group.end());
    const auto n_train = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(group.size()) + 1e-9));
    for (std::size_t i = 0; i < group.size(); ++i) {
      (i < n_train ? split.train : split.val).push_back(std::move(group[i]));
    }
  }
  auto by_id = [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; };
  std::sort(split.train.begin(), split.train.end(), by_id);
  std::sort(split.val.begin(), split.val.end(), by_id);
  return split;
}

// ----------------------------------------------------------- loading

CaseFrames load_case_frames(const CaseRecord& record, const SamplingConfig& cfg) {
  CaseFrames out;
  out.record = record;
  out.frames.reserve(record.frame_paths.size());
  for (const auto& p : record.frame_paths) out.frames.push_back(crop_resize(read_pgm(p), cfg));
  return out;
}

std::vector<ClipSample> materialize_clips(const CaseFrames& frames,
                                          const SamplingConfig& cfg) {
  std::vector<ClipSample> out;
  for (auto& w : enumerate_clips(frames.record, cfg)) {
    ClipSample s;
    for (std::int64_t j : w.fast_frames) s.frames.push_back(frames.frames.at(static_cast<std::size_t>(j)));
    s.window = std::move(w);
    out.push_back(std::move(s));
  }
  return out;
}

PathwayInputs clips_to_tensors(std::span<const Clip* const> clips, std::int64_t slow_stride) {
  if (clips.empty()) throw ShapeError("N", "clips_to_tensors: empty batch");
  if (slow_stride <= 0) throw Error(ErrorCode::kValue, "slow_stride must be positive");
  const Clip& first = *clips[0];
  if (first.empty()) throw ShapeError("T", "clips_to_tensors: empty clip");
  const auto n = static_cast<std::int64_t>(clips.size());
  const auto tf = static_cast<std::int64_t>(first.size());
  if (tf % slow_stride != 0) {
    throw ShapeError("T", "clip length " + std::to_string(tf) +
                              " is not a multiple of slow_stride");
  }
  const std::int64_t ts = tf / slow_stride;
  const std::int64_t h = first[0].height, w = first[0].width;
  PathwayInputs out{Tensor<float>({n, 1, ts, h, w}), Tensor<float>({n, 1, tf, h, w})};
  const std::int64_t plane = h * w;
  float* fast = out.fast.ptr();
  float* slow = out.slow.ptr();
  for (std::int64_t i = 0; i < n; ++i) {
    const Clip& c = *clips[static_cast<std::size_t>(i)];
    if (static_cast<std::int64_t>(c.size()) != tf) {
      throw ShapeError("T", "clips in a batch must share a length");
    }
    for (std::int64_t t = 0; t < tf; ++t) {
      const FrameImage& f = c[static_cast<std::size_t>(t)];
      if (f.height != h || f.width != w) throw ShapeError("HW", "frame dims differ within batch");
      float* dst = fast + (i * tf + t) * plane;
      for (std::int64_t k = 0; k < plane; ++k) dst[k] = static_cast<float>(f.pixels[k]) / 255.0f;
      if (t % slow_stride == 0) {
        std::copy_n(dst, plane, slow + (i * ts + t / slow_stride) * plane);
      }
    }
  }
  return out;
}

}  // namespace ebus
