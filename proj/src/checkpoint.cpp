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

#include "ebus/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>

#include "ebus/error.hpp"

namespace ebus {

namespace {

constexpr char kMagic[4] = {'E', 'B', 'D', 'S'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  void need(std::uint64_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      throw FormatError(pos_, std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::span<const std::uint8_t> take(std::uint64_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint64_t>(tensors.size());
  for (const auto& t : tensors) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.dims()) w.le<std::uint64_t>(static_cast<std::uint64_t>(d));
    for (float v : t.value.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError(0, "bad checkpoint magic");
  const std::size_t version_pos = r.pos();
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(version_pos, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.le<std::uint64_t>("tensor count");
  std::vector<NamedTensor> out;
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t start = r.pos();
    const auto len = r.le<std::uint32_t>("name length");
    auto name_bytes = r.take(len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!names.insert(name).second) throw FormatError(start, "duplicate tensor name '" + name + "'");
    const std::size_t rank_pos = r.pos();
    const auto rank = r.le<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) throw FormatError(rank_pos, "tensor rank must be 1..8");
    Shape dims;
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::size_t dim_pos = r.pos();
      const auto d = r.le<std::uint64_t>("dims");
      if (d == 0 || d > (std::uint64_t{1} << 40) || numel > (std::uint64_t{1} << 40) / d) {
        throw FormatError(dim_pos, "invalid tensor dimension");
      }
      numel *= d;
      dims.push_back(static_cast<std::int64_t>(d));
    }
    r.need(numel * 4, "tensor data");
    Tensor<float> t(dims);
    for (float& v : t.data()) v = std::bit_cast<float>(r.le<std::uint32_t>("tensor data"));
    out.push_back({std::move(name), std::move(t)});
  }
  if (!r.done()) throw FormatError(r.pos(), "trailing bytes after last tensor");
  return out;
}

std::vector<NamedTensor> model_tensors(ModelParams& params) {
  std::vector<NamedTensor> out;
  for (auto& [name, t] : params.named_tensors()) out.push_back({name, *t});
  return out;
}

void assign_tensors(ModelParams& params, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  auto targets = params.named_tensors();
  if (targets.size() != by_name.size()) {
    throw Error(ErrorCode::kValue, "checkpoint holds " + std::to_string(by_name.size()) +
                                       " tensors, model expects " + std::to_string(targets.size()));
  }
  for (auto& [name, dst] : targets) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::kValue, "checkpoint lacks tensor '" + name + "'");
    if (it->second->dims() != dst->dims()) {
      throw ShapeError(name, "checkpoint dims " + shape_str(it->second->dims()) +
                                 " differ from model " + shape_str(dst->dims()));
    }
    *dst = *it->second;
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void save_checkpoint(ModelParams& params, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(model_tensors(params)));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace ebus
